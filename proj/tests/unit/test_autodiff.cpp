#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "sdefim/autodiff.hpp"
#include "sdefim/random.hpp"

using namespace sdefim;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, RandomStream& rng, double lo = -1.5, double hi = 1.5) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Scalarizes the output with fixed random weights and compares reverse-mode
// gradients against central differences.
double max_gradient_error(const Builder& build, std::vector<Matrix> inputs, std::uint64_t seed = 1) {
  RandomStream rng(seed);
  Matrix weights;
  auto scalar = [&](const std::vector<Matrix>& xs, Tape& tape, bool leaves) {
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(leaves ? tape.leaf(x) : tape.constant(x));
    Var out = build(tape, vars);
    if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), rng);
    return std::make_pair(ad::sum(ad::mul(out, tape.constant(weights))), vars);
  };
  Tape tape;
  auto [loss, vars] = scalar(inputs, tape, true);
  tape.backward(loss);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix g = tape.grad(vars[k]);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      Tape tp(false), tm(false);
      const double fp = scalar(plus, tp, false).first.value()(0, 0);
      const double fm = scalar(minus, tm, false).first.value()(0, 0);
      const double fd = (fp - fm) / (2 * h);
      worst = std::max(worst, std::abs(fd - g.data()[i]) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

struct Inputs {
  RandomStream rng{42};
  Matrix m(Eigen::Index r, Eigen::Index c, double lo = -1.5, double hi = 1.5) { return random_matrix(r, c, rng, lo, hi); }
};

constexpr double kTol = 1e-6;

}  // namespace

TEST(Autodiff, MatmulVariants) {
  Inputs in;
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::matmul(v[0], v[1]); }, {in.m(3, 4), in.m(4, 2)}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::matmul_nt(v[0], v[1]); }, {in.m(3, 4), in.m(5, 4)}),
            kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::matmul_tn(v[0], v[1]); }, {in.m(4, 3), in.m(4, 2)}),
            kTol);
}

TEST(Autodiff, ElementwiseBinary) {
  Inputs in;
  const auto a = in.m(3, 3), b = in.m(3, 3);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::add(v[0], v[1]); }, {a, b}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::sub(v[0], v[1]); }, {a, b}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::mul(v[0], v[1]); }, {a, b}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::scale(v[0], -2.5); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::add_scalar(v[0], 0.7); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::mul(v[0], v[0]); }, {a}), kTol);
}

TEST(Autodiff, Broadcasting) {
  Inputs in;
  const auto a = in.m(4, 3);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::add_row(v[0], v[1]); }, {a, in.m(1, 3)}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::mul_row(v[0], v[1]); }, {a, in.m(1, 3)}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::mul_col(v[0], v[1]); }, {a, in.m(4, 1)}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::div_col(v[0], v[1]); }, {a, in.m(4, 1, 0.5, 2.0)}),
            kTol);
}

TEST(Autodiff, Pointwise) {
  Inputs in;
  const auto a = in.m(3, 4, -3.0, 3.0);
  const auto pos = in.m(3, 4, 0.2, 3.0);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::gelu(v[0]); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::softplus(v[0]); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::elu_plus_one(v[0]); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::exp(v[0]); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::log(v[0]); }, {pos}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::square(v[0]); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::sqrt(v[0]); }, {pos}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::clamp(v[0], -1.0, 1.0); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::max_scalar(v[0], 0.1); }, {a}), kTol);
}

TEST(Autodiff, Reductions) {
  Inputs in;
  const auto a = in.m(4, 3);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::sum(v[0]); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::mean(v[0]); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::col_sum(v[0]); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::row_sum(v[0]); }, {a}), kTol);
}

TEST(Autodiff, Structure) {
  Inputs in;
  const auto a = in.m(5, 4), b = in.m(5, 2), c = in.m(3, 4);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::slice_cols(v[0], 1, 2); }, {a}), kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::slice_rows(v[0], 2, 3); }, {a}), kTol);
  EXPECT_LT(max_gradient_error(
                [](Tape&, auto& v) {
                  std::vector<Var> parts{v[0], v[1]};
                  return ad::concat_cols(parts);
                },
                {a, b}),
            kTol);
  EXPECT_LT(max_gradient_error(
                [](Tape&, auto& v) {
                  std::vector<Var> parts{v[0], v[1]};
                  return ad::concat_rows(parts);
                },
                {a, c}),
            kTol);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::gather_rows(v[0], {4, 0, 4, 2}); }, {a}), kTol);
}

TEST(Autodiff, LayerNormAndSoftmax) {
  Inputs in;
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::layer_norm(v[0], v[1], v[2]); },
                               {in.m(4, 6), in.m(1, 6), in.m(1, 6)}),
            1e-5);
  EXPECT_LT(max_gradient_error([](Tape&, auto& v) { return ad::row_softmax(v[0]); }, {in.m(3, 5, -4, 4)}), kTol);
}

TEST(Autodiff, ComposedAttentionBlock) {
  Inputs in;
  auto block = [](Tape& t, auto& v) {
    Var q = ad::elu_plus_one(ad::matmul(v[0], v[1]));
    Var k = ad::elu_plus_one(ad::matmul(v[0], v[2]));
    Var kv = ad::matmul_tn(k, v[0]);
    Var num = ad::matmul(q, kv);
    Var den = ad::matmul_nt(q, ad::col_sum(k));
    (void)t;
    return ad::gelu(ad::div_col(num, den));
  };
  EXPECT_LT(max_gradient_error(block, {in.m(5, 3), in.m(3, 3), in.m(3, 3)}), 1e-5);
}

TEST(Autodiff, MulConstAndDetach) {
  Inputs in;
  const Matrix mask = in.m(3, 3);
  EXPECT_LT(max_gradient_error([mask](Tape&, auto& v) { return ad::mul_const(v[0], mask); }, {in.m(3, 3)}), kTol);

  Tape tape;
  Var x = tape.leaf(Matrix::Constant(1, 1, 3.0));
  Var y = ad::add(ad::square(x), ad::square(ad::detach(x)));
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 6.0);
  EXPECT_DOUBLE_EQ(y.value()(0, 0), 18.0);
}

TEST(Autodiff, ClampBlocksGradientOutside) {
  Tape tape;
  Matrix v(1, 3);
  v << -5.0, 0.5, 5.0;
  Var x = tape.leaf(v);
  tape.backward(ad::sum(ad::clamp(x, -1.0, 1.0)));
  EXPECT_EQ(tape.grad(x), (Matrix(1, 3) << 0.0, 1.0, 0.0).finished());
}

TEST(Autodiff, StableSoftplusAndGelu) {
  Tape tape(false);
  Matrix v(1, 3);
  v << -800.0, 0.0, 800.0;
  const Matrix s = ad::softplus(tape.constant(v)).value();
  EXPECT_TRUE(s.allFinite());
  EXPECT_NEAR(s(0, 1), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(s(0, 2), 800.0);
  EXPECT_GE(s(0, 0), 0.0);
  const Matrix g = ad::gelu(tape.constant(v)).value();
  EXPECT_DOUBLE_EQ(g(0, 2), 800.0);
  EXPECT_EQ(g(0, 1), 0.0);
}

TEST(Autodiff, UnreachedGradIsZeroAndConstantsNeedNone) {
  Tape tape;
  Var a = tape.leaf(Matrix::Ones(2, 2));
  Var b = tape.leaf(Matrix::Ones(2, 2));
  Var c = tape.constant(Matrix::Ones(2, 2));
  tape.backward(ad::sum(ad::mul(a, c)));
  EXPECT_EQ(tape.grad(b), Matrix::Zero(2, 2));
  EXPECT_EQ(tape.grad(a), Matrix::Ones(2, 2));
  EXPECT_FALSE(tape.requires_grad(c));
}

TEST(Autodiff, TruncateKeepsOlderNodes) {
  Tape tape(false);
  Var a = tape.constant(Matrix::Constant(2, 2, 2.0));
  const auto mark = tape.size();
  for (int i = 0; i < 10; ++i) ad::square(a);
  tape.truncate(mark);
  EXPECT_EQ(tape.size(), mark);
  EXPECT_EQ(ad::square(a).value(), Matrix::Constant(2, 2, 4.0));
}
