#include <gtest/gtest.h>

#include "sdefim/error.hpp"
#include "sdefim/polynomial.hpp"
#include "sdefim/random.hpp"

using namespace sdefim;

namespace {

Polynomial make(int arity, std::vector<std::pair<std::vector<int>, double>> terms) {
  Polynomial p(arity);
  for (auto& [e, c] : terms) p.add_term(MultiIndex{e}, c);
  return p;
}

}  // namespace

TEST(Polynomial, ZeroPolynomialEvaluatesToZero) {
  Polynomial p(2);
  EXPECT_EQ(p(Eigen::Vector2d(3.0, -1.0)), 0.0);
  EXPECT_EQ(p.degree(), -1);
}

TEST(Polynomial, DoubleWellDriftAtHalf) {
  const Polynomial p = make(1, {{{1}, 4.0}, {{3}, -4.0}});
  EXPECT_DOUBLE_EQ(p(Eigen::VectorXd::Constant(1, 0.5)), 1.5);
}

TEST(Polynomial, ThreeVariateExample) {
  const Polynomial p = make(3, {{{0, 0, 0}, 1.0}, {{3, 0, 0}, 2.0}, {{1, 1, 1}, -1.0}});
  EXPECT_DOUBLE_EQ(p(Eigen::Vector3d(1, 1, 1)), 2.0);
}

TEST(Polynomial, ArityMismatchThrows) {
  const Polynomial p = make(2, {{{1, 0}, 1.0}});
  EXPECT_THROW(p(Eigen::Vector3d(1, 2, 3)), DimensionError);
}

TEST(Polynomial, NonFiniteInputPropagates) {
  const Polynomial p = make(1, {{{2}, 1.0}});
  EXPECT_FALSE(std::isfinite(p(Eigen::VectorXd::Constant(1, std::nan("")))));
}

TEST(Polynomial, CanonicalOrderIsInsertionIndependent) {
  const Polynomial a = make(2, {{{0, 2}, 1.0}, {{1, 0}, 2.0}, {{0, 0}, 3.0}});
  const Polynomial b = make(2, {{{0, 0}, 3.0}, {{0, 2}, 1.0}, {{1, 0}, 2.0}});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.to_string(), b.to_string());
  ASSERT_EQ(a.terms().size(), 3u);
  EXPECT_EQ(a.terms()[0].index.degree(), 0);
  EXPECT_EQ(a.terms()[2].index.degree(), 2);
}

TEST(Polynomial, DuplicateTermsMerge) {
  const Polynomial p = make(1, {{{1}, 1.0}, {{1}, 2.5}});
  ASSERT_EQ(p.terms().size(), 1u);
  EXPECT_DOUBLE_EQ(p.terms()[0].coefficient, 3.5);
}

TEST(Polynomial, GradedLexWithinDegree) {
  const auto idx = enumerate_multi_indices(2, 2);
  ASSERT_EQ(idx.size(), 3u);
  EXPECT_EQ(idx[0].exponents, (std::vector<int>{2, 0}));
  EXPECT_EQ(idx[1].exponents, (std::vector<int>{1, 1}));
  EXPECT_EQ(idx[2].exponents, (std::vector<int>{0, 2}));
}

TEST(Polynomial, MultiIndexCountsAreStarsAndBars) {
  // C(m + n - 1, n - 1)
  EXPECT_EQ(enumerate_multi_indices(3, 3).size(), 10u);
  EXPECT_EQ(enumerate_multi_indices(3, 2).size(), 6u);
  EXPECT_EQ(enumerate_multi_indices(2, 3).size(), 4u);
  EXPECT_EQ(enumerate_multi_indices(1, 3).size(), 1u);
  EXPECT_EQ(enumerate_multi_indices(3, 0).size(), 1u);
}

TEST(PolynomialProperty, LinearInCoefficients) {
  RandomStream rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    Polynomial p(3), q(3);
    for (int k = 0; k < 5; ++k) {
      std::vector<int> e1 = {static_cast<int>(rng.uniform_int(0, 2)), static_cast<int>(rng.uniform_int(0, 1)),
                             static_cast<int>(rng.uniform_int(0, 1))};
      std::vector<int> e2 = {static_cast<int>(rng.uniform_int(0, 1)), static_cast<int>(rng.uniform_int(0, 2)),
                             static_cast<int>(rng.uniform_int(0, 1))};
      p.add_term(MultiIndex{e1}, rng.normal());
      q.add_term(MultiIndex{e2}, rng.normal());
    }
    const double a = rng.normal(), b = rng.normal();
    const Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal());
    const double lhs = (p * a + q * b)(x);
    const double rhs = a * p(x) + b * q(x);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(rhs)));
  }
}
