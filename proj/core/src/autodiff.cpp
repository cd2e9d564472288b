#include "sdefim/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "sdefim/error.hpp"

namespace sdefim::ad {

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ConfigError("autodiff operands live on different tapes");
}

}  // namespace

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, record_, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Pullback pullback) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(pullback));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Pullback pullback) {
  bool needs = false;
  if (record_) {
    for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  Node node{std::move(value), {}, {}, needs, false};
  if (needs) node.pullback = std::move(pullback);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::truncate(std::size_t n) {
  while (nodes_.size() > n) nodes_.pop_back();
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw ConfigError("backward called with a variable from another tape");
  Node& out = nodes_[output.id()];
  if (out.value.size() != 1) throw DimensionError("backward needs a scalar output");
  if (!out.requires_grad) return;
  out.grad = Matrix::Ones(1, 1);
  out.has_grad = true;
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.pullback) continue;
    n.pullback(*this, n.grad, n.value);
  }
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.rows()) throw DimensionError("matmul: inner dimensions differ");
  Matrix out = A * B;
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.cols()) throw DimensionError("matmul_nt: inner dimensions differ");
  Matrix out = A * B.transpose();
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b));
    if (t.requires_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

Var matmul_tn(Var a, Var b) {
  same_tape(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.rows() != B.rows()) throw DimensionError("matmul_tn: inner dimensions differ");
  Matrix out = A.transpose() * B;
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, t.value(b) * g.transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a) * g);
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape()->push(std::move(out), {a}, [a, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g * s); });
}

Var add_scalar(Var a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}

Var add_row(Var a, Var row) {
  same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw DimensionError("add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw DimensionError("mul_row: row shape mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape()->push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, (g.array().rowwise() * t.value(row).row(0).array()).matrix());
    if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(t.value(a)).colwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) throw DimensionError("mul_col: column shape mismatch");
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return a.tape()->push(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, (g.array().colwise() * t.value(col).col(0).array()).matrix());
    if (t.requires_grad(col)) t.accumulate(col, g.cwiseProduct(t.value(a)).rowwise().sum());
  });
}

Var div_col(Var a, Var col) {
  same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) throw DimensionError("div_col: column shape mismatch");
  Matrix out = a.value().array().colwise() / col.value().col(0).array();
  return a.tape()->push(std::move(out), {a, col}, [a, col](Tape& t, const Matrix& g, const Matrix& y) {
    const auto c = t.value(col).col(0).array();
    if (t.requires_grad(a)) t.accumulate(a, (g.array().colwise() / c).matrix());
    if (t.requires_grad(col)) {
      t.accumulate(col, (-(g.cwiseProduct(y).rowwise().sum()).array() / c).matrix());
    }
  });
}


Var gelu(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); });
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix d = t.value(a).unaryExpr([](double x) {
      const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
      const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      return cdf + x * pdf;
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var softplus(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix s = t.value(a).unaryExpr([](double x) {
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    t.accumulate(a, g.cwiseProduct(s));
  });
}

Var elu_plus_one(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return x > 0 ? x + 1.0 : std::exp(x); });
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix d = t.value(a).unaryExpr([](double x) { return x > 0 ? 1.0 : std::exp(x); });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp();
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a, g.cwiseProduct(y));
  });
}

Var log(Var a) {
  Matrix out = a.value().array().log();
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.cwiseQuotient(t.value(a)));
  });
}

Var square(Var a) {
  Matrix out = a.value().array().square();
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, 2.0 * g.cwiseProduct(t.value(a)));
  });
}

Var sqrt(Var a) {
  Matrix out = a.value().array().sqrt();
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a, (0.5 * g.array() / y.array()).matrix());
  });
}

Var clamp(Var a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape()->push(std::move(out), {a}, [a, lo, hi](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = t.value(a);
    t.accumulate(a, g.binaryExpr(x, [lo, hi](double gi, double xi) { return (xi > lo && xi < hi) ? gi : 0.0; }));
  });
}

Var max_scalar(Var a, double floor) {
  Matrix out = a.value().cwiseMax(floor);
  return a.tape()->push(std::move(out), {a}, [a, floor](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = t.value(a);
    t.accumulate(a, g.binaryExpr(x, [floor](double gi, double xi) { return xi > floor ? gi : 0.0; }));
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = t.value(a);
    t.accumulate(a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var col_sum(Var a) {
  Matrix out = a.value().colwise().sum();
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.replicate(t.value(a).rows(), 1));
  });
}

Var row_sum(Var a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.replicate(1, t.value(a).cols()));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw DimensionError("slice_cols out of range");
  Matrix out = a.value().middleCols(start, count);
  return a.tape()->push(std::move(out), {a}, [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    full.middleCols(start, count) = g;
    t.accumulate(a, full);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw DimensionError("slice_rows out of range");
  Matrix out = a.value().middleRows(start, count);
  return a.tape()->push(std::move(out), {a}, [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    full.middleRows(start, count) = g;
    t.accumulate(a, full);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape()->push(std::move(out), parts, [inputs, offsets](Tape& t, const Matrix& g, const Matrix&) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (t.requires_grad(inputs[i])) t.accumulate(inputs[i], g.middleCols(offsets[i], inputs[i].cols()));
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    offsets.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape()->push(std::move(out), parts, [inputs, offsets](Tape& t, const Matrix& g, const Matrix&) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (t.requires_grad(inputs[i])) t.accumulate(inputs[i], g.middleRows(offsets[i], inputs[i].rows()));
    }
  });
}

Var gather_rows(Var a, std::vector<Eigen::Index> rows) {
  const Matrix& A = a.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= A.rows()) throw DimensionError("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = A.row(rows[i]);
  }
  return a.tape()->push(std::move(out), {a}, [a, rows = std::move(rows)](Tape& t, const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    for (std::size_t i = 0; i < rows.size(); ++i) full.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, full);
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  same_tape(a, gain);
  same_tape(a, bias);
  const Matrix& X = a.value();
  const Eigen::Index c = X.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    throw DimensionError("layer_norm: gain/bias shape mismatch");
  }
  const Eigen::VectorXd mu = X.rowwise().mean();
  Matrix centered = X.colwise() - mu;
  const Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / static_cast<double>(c)) + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return a.tape()->push(std::move(out), {a, gain, bias}, [a, gain, bias, eps](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& X = t.value(a);
    const auto cols = static_cast<double>(X.cols());
    const Eigen::VectorXd mu = X.rowwise().mean();
    const Matrix centered = X.colwise() - mu;
    const Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / cols) + eps).rsqrt();
    const Matrix xhat = centered.array().colwise() * inv_std.array();
    if (t.requires_grad(gain)) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
    if (t.requires_grad(a)) {
      const Matrix dxhat = g.array().rowwise() * t.value(gain).row(0).array();
      const Eigen::VectorXd m1 = dxhat.rowwise().mean();
      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = (dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
      dx = dx.array().colwise() * inv_std.array();
      t.accumulate(a, dx);
    }
  });
}

Var row_softmax(Var a) {
  const Matrix& X = a.value();
  Matrix out = (X.colwise() - X.rowwise().maxCoeff()).array().exp();
  out = out.array().colwise() / out.rowwise().sum().array();
  return a.tape()->push(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(a, y.cwiseProduct(g.colwise() - dot));
  });
}

Var detach(Var a) { return a.tape()->constant(a.value()); }

Var mul_const(Var a, const Matrix& mask) {
  same_shape(a.value(), mask, "mul_const");
  Matrix out = a.value().cwiseProduct(mask);
  return a.tape()->push(std::move(out), {a}, [a, mask](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.cwiseProduct(mask));
  });
}

}  // namespace sdefim::ad
