#include <gtest/gtest.h>

#include <cmath>

#include "sdefim/corruption.hpp"
#include "sdefim/dataset.hpp"
#include "sdefim/error.hpp"
#include "sdefim/observations.hpp"
#include "sdefim/prior.hpp"

using namespace sdefim;

namespace {

Eigen::VectorXd v1(double x) { return Eigen::VectorXd::Constant(1, x); }

PriorConfig small_prior() {
  PriorConfig cfg;
  cfg.paths_override = 2;
  cfg.length_override = 16;
  return cfg;
}

bool has_term(const Polynomial& p, std::vector<int> e) {
  for (const auto& t : p.terms()) {
    if (t.index.exponents == e) return true;
  }
  return false;
}

PathBundle grid_bundle(int paths, int length, int dim, RandomStream rng) {
  PathBundle b;
  b.dim = dim;
  for (int k = 0; k < paths; ++k) {
    Path p;
    p.states.resize(length, dim);
    for (int r = 0; r < length; ++r) {
      p.times.push_back(0.01 * r);
      for (int j = 0; j < dim; ++j) p.states(r, j) = rng.normal();
    }
    b.paths.push_back(p);
    b.divergence.push_back(Divergence::None);
  }
  return b;
}

}  // namespace

TEST(SamplePolynomial, DegreeBoundAndMonomialCount) {
  RandomStream rng(1);
  for (int t = 0; t < 2000; ++t) {
    const auto p = sample_polynomial(3, 3, rng);
    EXPECT_LE(p.degree(), 3);
    EXPECT_GE(p.terms().size(), 1u);
    int cubic = 0;
    for (const auto& term : p.terms()) cubic += term.index.degree() == 3 ? 1 : 0;
    EXPECT_LE(cubic, 10);
  }
}

TEST(SamplePolynomial, WorkedExampleStructureIsReachable) {
  RandomStream rng(2);
  bool found = false;
  for (int t = 0; t < 200000 && !found; ++t) {
    const auto p = sample_polynomial(3, 3, rng);
    found = p.terms().size() == 3 && has_term(p, {0, 0, 0}) && has_term(p, {3, 0, 0}) && has_term(p, {1, 1, 1});
  }
  EXPECT_TRUE(found);
}

TEST(SamplePolynomial, ProbabilityOfConstantTerm) {
  // P(0 in degree set) = sum_k (k/4) P(N_deg = k) = (1 + 2 + 3) / 12 = 0.5
  RandomStream rng(3);
  const int n = 100000;
  int hits = 0;
  for (int t = 0; t < n; ++t) hits += has_term(sample_polynomial(1, 3, rng), {0}) ? 1 : 0;
  EXPECT_NEAR(hits / static_cast<double>(n), 0.5, 0.01);
}

TEST(SampleSystem, DegreesRespectPrior) {
  RandomStream rng(4);
  PriorConfig cfg;
  bool negative_constant_diffusion = false;
  for (int t = 0; t < 3000; ++t) {
    const int d = 1 + t % 3;
    const auto sys = sample_system(d, cfg, rng);
    EXPECT_EQ(sys.dim(), d);
    for (int i = 0; i < d; ++i) {
      EXPECT_LE(sys.drift()[i].degree(), 3);
      EXPECT_LE(sys.diffusion_pre()[i].degree(), 2);
      EXPECT_EQ(sys.drift()[i].arity(), d);
      const auto& g = sys.diffusion_pre()[i];
      if (g.degree() == 0 && g.terms()[0].coefficient < 0) negative_constant_diffusion = true;
    }
  }
  EXPECT_TRUE(negative_constant_diffusion);
}

TEST(SampleSystem, ComponentsIndependent) {
  RandomStream rng(5);
  PriorConfig cfg;
  const int n = 4000;
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  const Eigen::Vector2d x(0.3, -0.4);
  for (int t = 0; t < n; ++t) {
    const auto f = sample_system(2, cfg, rng).eval_drift(x);
    sa += f[0];
    sb += f[1];
    sab += f[0] * f[1];
    saa += f[0] * f[0];
    sbb += f[1] * f[1];
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
  EXPECT_LT(std::abs(corr), 0.06);
}

TEST(GenerateEquation, FrozenSystemAccepted) {
  const SdeSystem sys({Polynomial(1)}, {Polynomial::constant(1, -1.0)});
  PriorConfig cfg;
  const auto r = simulate_candidate(sys, 0, cfg, {v1(0.4)}, RandomStream(1));
  ASSERT_TRUE(std::holds_alternative<EquationRecord>(r));
  const auto& rec = std::get<EquationRecord>(r);
  EXPECT_EQ(rec.clean.paths[0].length(), 128);
  EXPECT_EQ(rec.clean.paths[0].states(127, 0), 0.4);
}

TEST(GenerateEquation, CubicBlowUpRejectedByThreshold) {
  Polynomial cube(1);
  cube.add_term(MultiIndex{{3}}, 1.0);
  const SdeSystem sys({cube}, {Polynomial(1)});
  PriorConfig cfg;
  const auto r = simulate_candidate(sys, 1, cfg, {v1(3.0)}, RandomStream(1));
  ASSERT_TRUE(std::holds_alternative<Rejected>(r));
  EXPECT_EQ(std::get<Rejected>(r).reason, RejectReason::Threshold);
}

TEST(GenerateEquation, PresetShapes) {
  const SdeSystem sys({Polynomial(1)}, {Polynomial::constant(1, 0.01)});
  PriorConfig cfg;
  std::vector<Eigen::VectorXd> x0(25, v1(0.0));
  const auto r = simulate_candidate(sys, 1, cfg, x0, RandomStream(3));
  const auto& rec = std::get<EquationRecord>(r);
  ASSERT_EQ(rec.clean.paths.size(), 25u);
  for (const auto& p : rec.clean.paths) {
    ASSERT_EQ(p.length(), 512);
    EXPECT_NEAR(p.times[1] - p.times[0], 0.01, 1e-15);
    EXPECT_NEAR(p.times.back(), 5.11, 1e-12);
  }
  const auto presets = default_grid_presets();
  EXPECT_NEAR(presets[1].horizon(), 5.12, 1e-12);
  EXPECT_NEAR(presets[0].horizon(), 12.8, 1e-12);
  EXPECT_NEAR(presets[2].horizon(), 1.024, 1e-12);
}

TEST(Thinning, IdentityAtOne) {
  const auto b = grid_bundle(3, 20, 2, RandomStream(1));
  EXPECT_EQ(thin_bernoulli(b, 1.0, RandomStream(2)), b);
}

TEST(Thinning, KeepFractionAndStructure) {
  const auto b = grid_bundle(100, 1000, 1, RandomStream(1));
  const auto t = thin_bernoulli(b, 0.9, RandomStream(2));
  std::size_t kept = 0;
  for (std::size_t k = 0; k < t.paths.size(); ++k) {
    const auto& p = t.paths[k];
    kept += p.length();
    EXPECT_EQ(p.times[0], 0.0);
    EXPECT_EQ(p.states(0, 0), b.paths[k].states(0, 0));
    for (int r = 1; r < p.length(); ++r) EXPECT_GT(p.times[r], p.times[r - 1]);
  }
  EXPECT_NEAR(static_cast<double>(kept) / 100000.0, 0.9, 0.01);
}

TEST(Noise, IdentityAtZero) {
  const auto b = grid_bundle(2, 10, 2, RandomStream(1));
  EXPECT_EQ(add_relative_noise(b, 0.0, RandomStream(3)), b);
}

TEST(Noise, RangeFormula) {
  PathBundle b;
  b.dim = 1;
  Path p;
  p.times = {0.0, 1.0};
  p.states = Eigen::MatrixXd(2, 1);
  p.states << -1.0, 3.0;
  b.paths.push_back(p);
  b.divergence.push_back(Divergence::None);
  EXPECT_DOUBLE_EQ(component_ranges(b)[0], 2.0);
}

TEST(Noise, EmpiricalScale) {
  auto b = grid_bundle(100, 1000, 2, RandomStream(4));
  const auto r = component_ranges(b);
  const double sigma = 0.05;
  const auto noisy = add_relative_noise(b, sigma, RandomStream(5));
  for (int j = 0; j < 2; ++j) {
    double s2 = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < b.paths.size(); ++k) {
      const Eigen::VectorXd e = noisy.paths[k].states.col(j) - b.paths[k].states.col(j);
      s2 += e.squaredNorm();
      n += e.size();
    }
    EXPECT_NEAR(std::sqrt(s2 / n) / (sigma * r[j]), 1.0, 0.02);
  }
}

TEST(ObservationSet, TupleCount) {
  const auto b = grid_bundle(2, 3, 1, RandomStream(1));
  const auto built = to_observation_set(b);
  EXPECT_EQ(built.set.size(), 4);
  EXPECT_EQ(built.skipped_paths, 0);
}

TEST(ObservationSet, HandConstruction) {
  PathBundle b;
  b.dim = 1;
  Path p;
  p.times = {0.0, 0.1, 0.3};
  p.states = Eigen::MatrixXd(3, 1);
  p.states << 0.0, 1.0, 3.0;
  b.paths.push_back(p);
  Path single;
  single.times = {0.0};
  single.states = Eigen::MatrixXd::Zero(1, 1);
  b.paths.push_back(single);
  b.divergence.assign(2, Divergence::None);
  const auto built = to_observation_set(b);
  const auto& s = built.set;
  ASSERT_EQ(s.size(), 2);
  EXPECT_EQ(built.skipped_paths, 1);
  EXPECT_EQ(s.y(0, 0), 0.0);
  EXPECT_EQ(s.dy(0, 0), 1.0);
  EXPECT_EQ(s.dy2(0, 0), 1.0);
  EXPECT_NEAR(s.dtau[0], 0.1, 1e-15);
  EXPECT_EQ(s.y(1, 0), 1.0);
  EXPECT_EQ(s.dy(1, 0), 2.0);
  EXPECT_EQ(s.dy2(1, 0), 4.0);
  EXPECT_NEAR(s.dtau[1], 0.2, 1e-15);
}

TEST(ObservationSet, ElementwiseSquare) {
  PathBundle b;
  b.dim = 2;
  Path p;
  p.times = {0.0, 1.0};
  p.states = Eigen::MatrixXd(2, 2);
  p.states << 0.0, 0.0, 1.0, -2.0;
  b.paths.push_back(p);
  b.divergence.push_back(Divergence::None);
  const auto s = to_observation_set(b).set;
  EXPECT_EQ(s.dy2(0, 0), 1.0);
  EXPECT_EQ(s.dy2(0, 1), 4.0);
}

TEST(Dataset, DimensionAllocation) {
  const auto a = allocate_dimensions(6, {1, 2, 3});
  EXPECT_EQ(a, (std::vector<std::int64_t>{1, 2, 3}));
  const auto b = allocate_dimensions(10, {1, 0, 0});
  EXPECT_EQ(b, (std::vector<std::int64_t>{10, 0, 0}));
}

TEST(Dataset, SixRecordsFollowRatio) {
  const auto ds = generate_dataset(small_prior(), {}, 6, 11);
  ASSERT_EQ(ds.records.size(), 6u);
  std::array<int, 3> counts{};
  for (const auto& r : ds.records) counts[r.system.dim() - 1]++;
  EXPECT_EQ(counts, (std::array<int, 3>{1, 2, 3}));
}

TEST(Dataset, DeterministicBytesAndRoundTrip) {
  const auto a = generate_dataset(small_prior(), {}, 12, 7);
  const auto b = generate_dataset(small_prior(), {}, 12, 7);
  const auto bytes = encode_dataset(a);
  EXPECT_EQ(bytes, encode_dataset(b));
  const auto back = decode_dataset(bytes);
  EXPECT_EQ(back.records, a.records);
  EXPECT_EQ(encode_dataset(back), bytes);
}

TEST(Dataset, AcceptedRecordsRespectBound) {
  const auto ds = generate_dataset(small_prior(), {}, 30, 8);
  for (const auto& r : ds.records) {
    for (const auto& p : r.clean.paths) {
      EXPECT_TRUE(p.states.allFinite());
      EXPECT_LE(p.states.cwiseAbs().maxCoeff(), 100.0);
    }
  }
}

TEST(Dataset, CorruptionAssignmentFractions) {
  const auto ds = generate_dataset(small_prior(), {}, 900, 9);
  int noisy = 0, irregular = 0, both = 0;
  for (const auto& r : ds.records) {
    noisy += r.corruption.noisy && r.corruption.sigma > 0 ? 1 : 0;
    irregular += r.corruption.irregular ? 1 : 0;
    both += r.corruption.noisy && r.corruption.irregular ? 1 : 0;
    EXPECT_GE(r.corruption.eta, 0.9);
    EXPECT_LE(r.corruption.sigma, 0.1);
  }
  EXPECT_NEAR(noisy / 900.0, 1.0 / 3.0, 0.05);
  EXPECT_NEAR(irregular / 900.0, 1.0 / 3.0, 0.05);
  EXPECT_NEAR(both / 900.0, 1.0 / 9.0, 0.04);
}

TEST(Dataset, CorruptedDerivesFromClean) {
  const auto ds = generate_dataset(small_prior(), {}, 60, 10);
  for (const auto& r : ds.records) {
    ASSERT_EQ(r.clean.paths.size(), r.observed.paths.size());
    if (!r.corruption.noisy && !r.corruption.irregular) EXPECT_EQ(r.clean, r.observed);
    if (r.corruption.irregular && !r.corruption.noisy) {
      for (std::size_t k = 0; k < r.clean.paths.size(); ++k) {
        EXPECT_LE(r.observed.paths[k].length(), r.clean.paths[k].length());
      }
    }
  }
}

TEST(Dataset, BadMagicIsFormatError) {
  EXPECT_THROW(decode_dataset("garbage bytes"), FormatError);
}
