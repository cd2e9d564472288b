#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace sdefim::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape over dense matrices.
///
/// Every op computes its value eagerly and, when any input requires a
/// gradient, records a pullback. `backward` walks the tape once in reverse.
/// With `record = false` no pullbacks are stored (inference mode).
class Tape {
 public:
  using Pullback = std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Differentiable input (parameter or input whose gradient is wanted).
  Var leaf(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient accumulated by backward(); zeros if the node was not reached.
  Matrix grad(Var v) const;

  /// Seeds d(output)/d(output) = 1; output must be 1 x 1.
  void backward(Var output);

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  /// Drops every node created after the first `n`; older handles stay valid.
  void truncate(std::size_t n);

  /// Used by op implementations.
  Var push(Matrix value, std::initializer_list<Var> inputs, Pullback pullback);
  Var push(Matrix value, std::span<const Var> inputs, Pullback pullback);
  /// grad[v] += contribution, allocating lazily. No-op if v needs no grad.
  template <typename Expr>
  void accumulate(Var v, const Expr& contribution) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = contribution;
      n.has_grad = true;
    } else {
      n.grad += contribution;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Pullback pullback;
    bool requires_grad = false;
    bool has_grad = false;
  };

  bool record_;
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// Linear algebra.
Var matmul(Var a, Var b);      // a b
Var matmul_nt(Var a, Var b);   // a b^T
Var matmul_tn(Var a, Var b);   // a^T b

// Elementwise, same shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

// Broadcasting: `row` is 1 x cols, `col` is rows x 1.
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var mul_col(Var a, Var col);
Var div_col(Var a, Var col);

// Pointwise nonlinearities.
Var gelu(Var a);
Var softplus(Var a);
Var elu_plus_one(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
/// Gradient passes only where lo < a < hi.
Var clamp(Var a, double lo, double hi);
Var max_scalar(Var a, double floor);

// Reductions.
Var sum(Var a);
Var mean(Var a);
Var col_sum(Var a);  // 1 x cols
Var row_sum(Var a);  // rows x 1

// Structure.
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Rows of `a` listed in `rows`; gradients scatter-add back.
Var gather_rows(Var a, std::vector<Eigen::Index> rows);

// Normalization and attention primitives.
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
Var row_softmax(Var a);

/// Copy of `a` that blocks gradient flow.
Var detach(Var a);
/// a .* mask for a constant mask (dropout).
Var mul_const(Var a, const Matrix& mask);

}  // namespace sdefim::ad
