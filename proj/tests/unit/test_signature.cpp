#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sdefim/error.hpp"
#include "sdefim/random.hpp"
#include "sdefim/signature.hpp"
#include "sdefim/simulation.hpp"

using namespace sdefim;

namespace {

MmdConfig linear(int level) {
  MmdConfig cfg;
  cfg.base = BaseKernel::Linear;
  cfg.level = level;
  return cfg;
}

PathStates random_path(int length, int d, RandomStream& rng, double step = 0.4) {
  PathStates p(length, d);
  p.row(0).setZero();
  for (int r = 1; r < length; ++r) {
    for (int j = 0; j < d; ++j) p(r, j) = p(r - 1, j) + step * rng.normal();
  }
  return p;
}

// Truncated tensor algebra: levels[k] holds d^k coefficients.
using Tensor = std::vector<std::vector<double>>;

Tensor tensor_exp(const Eigen::VectorXd& v, int level) {
  const int d = static_cast<int>(v.size());
  Tensor t(level + 1);
  t[0] = {1.0};
  for (int k = 1; k <= level; ++k) {
    t[k].resize(t[k - 1].size() * d);
    for (std::size_t i = 0; i < t[k - 1].size(); ++i) {
      for (int j = 0; j < d; ++j) t[k][i * d + j] = t[k - 1][i] * v[j] / k;
    }
  }
  return t;
}

Tensor tensor_mul(const Tensor& a, const Tensor& b, int d) {
  const int level = static_cast<int>(a.size()) - 1;
  Tensor c(level + 1);
  for (int k = 0; k <= level; ++k) {
    c[k].assign(a[k].size(), 0.0);
    for (int i = 0; i <= k; ++i) {
      const std::size_t nb = b[k - i].size();
      for (std::size_t p = 0; p < a[i].size(); ++p) {
        for (std::size_t q = 0; q < nb; ++q) c[k][p * nb + q] += a[i][p] * b[k - i][q];
      }
    }
    (void)d;
  }
  return c;
}

// Chen's identity: signature of a piecewise-linear path.
Tensor signature(const PathStates& p, int level) {
  Tensor s = tensor_exp(Eigen::VectorXd::Zero(p.cols()), level);
  for (Eigen::Index r = 1; r < p.rows(); ++r) {
    s = tensor_mul(s, tensor_exp((p.row(r) - p.row(r - 1)).transpose(), level), static_cast<int>(p.cols()));
  }
  return s;
}

double tensor_dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) s += a[k][i] * b[k][i];
  }
  return s;
}

std::vector<PathStates> ou_paths(double k, int count, std::uint64_t seed) {
  Polynomial f(1);
  f.add_term(MultiIndex{{1}}, -k);
  const SdeSystem sys({f}, {Polynomial::constant(1, 0.5)});
  std::vector<Eigen::VectorXd> x0(count, Eigen::VectorXd::Constant(1, 1.0));
  SimulationOptions opt;
  opt.record_stride = 10;
  const auto b = simulate(sys, {0.01, 200}, x0, RandomStream(seed), opt);
  std::vector<PathStates> out;
  for (const auto& p : b.paths) out.push_back(p.states);
  return out;
}

}  // namespace

TEST(SignatureKernel, StraightLinesClosedForm) {
  RandomStream rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto a = random_path(2, 3, rng, 1.0);
    const auto b = random_path(2, 3, rng, 1.0);
    const double ip = (a.row(1) - a.row(0)).dot(b.row(1) - b.row(0));
    for (int level : {1, 2, 5}) {
      double expect = 0.0, fact = 1.0;
      for (int k = 0; k <= level; ++k) {
        if (k > 0) fact *= k;
        expect += std::pow(ip, k) / (fact * fact);
      }
      EXPECT_NEAR(signature_kernel(a, b, linear(level)), expect, 1e-12 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST(SignatureKernel, MatchesExplicitSignatures) {
  RandomStream rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto a = random_path(6, 2, rng);
    const auto b = random_path(4, 2, rng);
    for (int level : {1, 3, 4}) {
      const double expect = tensor_dot(signature(a, level), signature(b, level));
      EXPECT_NEAR(signature_kernel(a, b, linear(level)), expect, 1e-11 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST(SignatureKernel, ConstantPathsGiveOne) {
  const PathStates c = PathStates::Constant(5, 2, 0.7);
  RandomStream rng(3);
  const auto b = random_path(7, 2, rng);
  EXPECT_DOUBLE_EQ(signature_kernel(c, b, linear(5)), 1.0);
  MmdConfig rbf;
  rbf.bandwidth = 1.3;
  EXPECT_NEAR(signature_kernel(c, c, rbf), 1.0, 1e-15);
}

TEST(SignatureKernel, SymmetricAndDuplicationInvariant) {
  RandomStream rng(4);
  MmdConfig rbf;
  rbf.bandwidth = 0.8;
  for (int t = 0; t < 5; ++t) {
    const auto a = random_path(8, 2, rng);
    const auto b = random_path(5, 2, rng);
    EXPECT_NEAR(signature_kernel(a, b, rbf), signature_kernel(b, a, rbf), 1e-12);
    PathStates dup(a.rows() + 2, 2);
    dup << a.topRows(3), a.row(2), a.bottomRows(a.rows() - 3).topRows(1), a.bottomRows(a.rows() - 3);
    EXPECT_NEAR(signature_kernel(dup, b, rbf), signature_kernel(a, b, rbf), 1e-12);
    EXPECT_NEAR(signature_kernel(dup, b, linear(4)), signature_kernel(a, b, linear(4)), 1e-10);
  }
}

TEST(SignatureKernel, GramIsPositiveSemidefinite) {
  RandomStream rng(5);
  std::vector<PathStates> p, q;
  for (int i = 0; i < 6; ++i) p.push_back(random_path(10, 2, rng));
  for (int i = 0; i < 6; ++i) q.push_back(random_path(12, 2, rng));
  MmdConfig cfg;
  cfg = resolve_bandwidth(cfg, p, q);
  const Eigen::MatrixXd g = pooled_gram(p, q, cfg);
  EXPECT_LT((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-9 * es.eigenvalues().maxCoeff());
}

TEST(SignatureKernel, InvalidInputs) {
  EXPECT_THROW(signature_kernel(PathStates::Zero(1, 1), PathStates::Zero(3, 1), linear(2)), DataError);
  EXPECT_THROW(signature_kernel(PathStates::Zero(3, 1), PathStates::Zero(3, 2), linear(2)), DimensionError);
  MmdConfig unresolved;
  EXPECT_THROW(signature_kernel(PathStates::Zero(3, 1), PathStates::Zero(3, 1), unresolved), ConfigError);
}

TEST(Bandwidth, MedianOfKnownStates) {
  // States 0, 1, 3 pooled: distances 1, 2, 3 -> median 2.
  std::vector<PathStates> p{(PathStates(2, 1) << 0.0, 1.0).finished()};
  std::vector<PathStates> q{(PathStates(1, 1) << 3.0).finished()};
  EXPECT_DOUBLE_EQ(median_bandwidth(p, q), 2.0);
  MmdConfig fixed;
  fixed.bandwidth = 0.5;
  EXPECT_EQ(resolve_bandwidth(fixed, p, q).bandwidth, 0.5);
  EXPECT_EQ(resolve_bandwidth(MmdConfig{}, p, q).bandwidth, 2.0);
}

TEST(Mmd, ConstantPathsGiveZero) {
  std::vector<PathStates> p, q;
  for (int i = 0; i < 4; ++i) p.push_back(PathStates::Constant(5, 1, i));
  for (int i = 0; i < 3; ++i) q.push_back(PathStates::Constant(6, 1, -i));
  EXPECT_NEAR(mmd_unbiased(p, q, linear(3)).mmd2, 0.0, 1e-14);
}

TEST(Mmd, SymmetricAndHandFormula) {
  Eigen::MatrixXd g(4, 4);
  g << 2, 1, 0, 0.5,  //
      1, 3, 0.2, 0.1,  //
      0, 0.2, 1, 0.4,  //
      0.5, 0.1, 0.4, 2;
  // x = {0, 1}, y = {2, 3}: kxx = 1, kyy = 0.4, kxy = (0 + 0.5 + 0.2 + 0.1) / 4.
  EXPECT_NEAR(mmd_from_gram(g, {0, 1}, {2, 3}), 1.0 + 0.4 - 2 * 0.2, 1e-15);
  EXPECT_NEAR(mmd_from_gram(g, {2, 3}, {0, 1}), mmd_from_gram(g, {0, 1}, {2, 3}), 1e-15);
  // Unequal sizes: x = {0, 1, 2}, y = {3}.
  const double kxx = 2 * (1 + 0 + 0.2) / 6.0;
  const std::vector<Eigen::Index> x{0, 1, 2};
  const std::vector<Eigen::Index> y{3, 2};
  const double kyy2 = 2 * 0.4 / 2.0;
  const double kxy2 = (0.5 + 0.1 + 0.4 + 0 + 0.2 + 1) / 6.0;
  EXPECT_NEAR(mmd_from_gram(g, x, y), kxx + kyy2 - 2 * kxy2, 1e-15);
}

TEST(Mmd, SameDistributionWithinNullAndShiftSeparated) {
  MmdConfig cfg;
  cfg.level = 3;
  const auto a = ou_paths(1.0, 30, 1);
  const auto b = ou_paths(1.0, 30, 2);
  const auto c = ou_paths(4.0, 30, 3);
  const auto same = permutation_test(a, b, cfg, 100, 7);
  EXPECT_EQ(same.null.size(), 100u);
  EXPECT_LT(std::abs(same.mmd2), 3.0 * same.null_sd());
  const auto diff = permutation_test(a, c, cfg, 100, 7);
  EXPECT_GT(diff.mmd2, 5.0 * diff.null_sd());
  EXPECT_LT(diff.p_value(), 0.02);
  EXPECT_NEAR(same.null_mean(), 0.0, 3.0 * same.null_sd() / std::sqrt(10.0));
}

TEST(Mmd, PermutationTestDeterministic) {
  MmdConfig cfg;
  cfg.level = 2;
  const auto a = ou_paths(1.0, 8, 4);
  const auto b = ou_paths(2.0, 8, 5);
  const auto r1 = permutation_test(a, b, cfg, 20, 3);
  const auto r2 = permutation_test(a, b, cfg, 20, 3);
  EXPECT_EQ(r1.null, r2.null);
  EXPECT_EQ(r1.mmd2, r2.mmd2);
  EXPECT_LE(r1.null_quantile(0.5), r1.null_quantile(0.99));
}

TEST(Mmd, ConfigJsonRoundTrip) {
  MmdConfig cfg = linear(4);
  cfg.bandwidth = 0.3;
  EXPECT_EQ(to_json(mmd_config_from_json(to_json(cfg))), to_json(cfg));
  EXPECT_THROW(mmd_config_from_json({{"base", "poly"}}), ConfigError);
}
