#include "sdefim/signature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdefim/error.hpp"
#include "sdefim/parallel.hpp"
#include "sdefim/random.hpp"

namespace sdefim {

void MmdConfig::validate() const {
  if (level < 1) throw ConfigError("signature level must be >= 1");
  if (median_sample < 2) throw ConfigError("median heuristic needs at least 2 states");
  if (std::isnan(bandwidth)) throw ConfigError("bandwidth is NaN");
}

nlohmann::json to_json(const MmdConfig& cfg) {
  return {{"level", cfg.level},
          {"base", cfg.base == BaseKernel::Rbf ? "rbf" : "linear"},
          {"bandwidth", cfg.bandwidth},
          {"median_sample", cfg.median_sample}};
}

MmdConfig mmd_config_from_json(const nlohmann::json& j) {
  MmdConfig cfg;
  try {
    cfg.level = j.value("level", cfg.level);
    const std::string base = j.value("base", std::string("rbf"));
    if (base == "rbf") {
      cfg.base = BaseKernel::Rbf;
    } else if (base == "linear") {
      cfg.base = BaseKernel::Linear;
    } else {
      throw ConfigError("unknown base kernel '" + base + "'");
    }
    cfg.bandwidth = j.value("bandwidth", cfg.bandwidth);
    cfg.median_sample = j.value("median_sample", cfg.median_sample);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad MMD config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

Eigen::MatrixXd base_gram(const PathStates& a, const PathStates& b, const MmdConfig& cfg) {
  Eigen::MatrixXd k = a * b.transpose();
  if (cfg.base == BaseKernel::Rbf) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm();
    const Eigen::VectorXd nb = b.rowwise().squaredNorm();
    const double inv = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth);
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      for (Eigen::Index i = 0; i < k.rows(); ++i) {
        const double d2 = std::max(0.0, na[i] + nb[j] - 2.0 * k(i, j));
        k(i, j) = std::exp(-d2 * inv);
      }
    }
  }
  return k;
}

// Strict prefix sums: along rows (over i' < i) and columns (over j' < j).
Eigen::ArrayXXd prefix_i(const Eigen::ArrayXXd& x) {
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 1; i < x.rows(); ++i) out.row(i) = out.row(i - 1) + x.row(i - 1);
  return out;
}

Eigen::ArrayXXd prefix_j(const Eigen::ArrayXXd& x) {
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(x.rows(), x.cols());
  for (Eigen::Index j = 1; j < x.cols(); ++j) out.col(j) = out.col(j - 1) + x.col(j - 1);
  return out;
}

}  // namespace

double signature_kernel(const PathStates& a, const PathStates& b, const MmdConfig& cfg) {
  if (a.rows() < 2 || b.rows() < 2) throw DataError("signature kernel needs paths with at least 2 points");
  if (a.cols() != b.cols()) throw DimensionError("signature kernel paths differ in dimension");
  if (cfg.level < 1) throw ConfigError("signature level must be >= 1");
  if (cfg.base == BaseKernel::Rbf && !(cfg.bandwidth > 0.0)) throw ConfigError("RBF bandwidth must be resolved and > 0");
  const Eigen::MatrixXd k = base_gram(a, b, cfg);
  const Eigen::Index m = a.rows() - 1;
  const Eigen::Index n = b.rows() - 1;
  const Eigen::ArrayXXd inc = (k.bottomRightCorner(m, n) - k.topRightCorner(m, n) - k.bottomLeftCorner(m, n) +
                               k.topLeftCorner(m, n))
                                  .array();
  const int levels = cfg.level;
  // t[r][s]: sequences whose trailing runs in the two index lists have
  // lengths r + 1 and s + 1, already divided by those factorials.
  std::vector<std::vector<Eigen::ArrayXXd>> t(levels, std::vector<Eigen::ArrayXXd>(levels));
  t[0][0] = inc;
  double total = 1.0 + inc.sum();
  for (int lvl = 2; lvl <= levels; ++lvl) {
    const int prev = lvl - 1;  // runs at the previous level range over 1..prev
    std::vector<std::vector<Eigen::ArrayXXd>> next(levels, std::vector<Eigen::ArrayXXd>(levels));
    Eigen::ArrayXXd all = Eigen::ArrayXXd::Zero(m, n);
    std::vector<Eigen::ArrayXXd> by_r(prev, Eigen::ArrayXXd::Zero(m, n));
    std::vector<Eigen::ArrayXXd> by_s(prev, Eigen::ArrayXXd::Zero(m, n));
    for (int r = 0; r < prev; ++r) {
      for (int s = 0; s < prev; ++s) {
        if (t[r][s].size() == 0) continue;
        all += t[r][s];
        by_r[r] += t[r][s];
        by_s[s] += t[r][s];
      }
    }
    next[0][0] = inc * prefix_j(prefix_i(all));
    for (int r = 0; r < prev; ++r) next[r + 1][0] = inc * prefix_j(by_r[r]) / static_cast<double>(r + 2);
    for (int s = 0; s < prev; ++s) next[0][s + 1] = inc * prefix_i(by_s[s]) / static_cast<double>(s + 2);
    for (int r = 0; r < prev; ++r) {
      for (int s = 0; s < prev; ++s) {
        if (t[r][s].size() == 0) continue;
        next[r + 1][s + 1] = inc * t[r][s] / static_cast<double>((r + 2) * (s + 2));
      }
    }
    for (const auto& row : next) {
      for (const auto& x : row) {
        if (x.size() != 0) total += x.sum();
      }
    }
    t = std::move(next);
  }
  return total;
}

double median_bandwidth(const std::vector<PathStates>& p, const std::vector<PathStates>& q, int max_states) {
  std::vector<const PathStates*> all;
  Eigen::Index total = 0;
  for (const auto* set : {&p, &q}) {
    for (const auto& path : *set) {
      all.push_back(&path);
      total += path.rows();
    }
  }
  if (total < 2) throw DataError("median heuristic needs at least 2 states");
  const Eigen::Index stride = std::max<Eigen::Index>(1, (total + max_states - 1) / max_states);
  std::vector<Eigen::VectorXd> states;
  Eigen::Index idx = 0;
  for (const auto* path : all) {
    for (Eigen::Index r = 0; r < path->rows(); ++r, ++idx) {
      if (idx % stride == 0) states.push_back(path->row(r).transpose());
    }
  }
  std::vector<double> dist;
  dist.reserve(states.size() * (states.size() - 1) / 2);
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = i + 1; j < states.size(); ++j) dist.push_back((states[i] - states[j]).norm());
  }
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  const double med = *mid;
  return (med > 0.0 && std::isfinite(med)) ? med : 1.0;
}

MmdConfig resolve_bandwidth(const MmdConfig& cfg, const std::vector<PathStates>& p, const std::vector<PathStates>& q) {
  MmdConfig out = cfg;
  if (cfg.base == BaseKernel::Rbf && !(cfg.bandwidth > 0.0)) out.bandwidth = median_bandwidth(p, q, cfg.median_sample);
  return out;
}

Eigen::MatrixXd pooled_gram(const std::vector<PathStates>& p, const std::vector<PathStates>& q, const MmdConfig& cfg) {
  std::vector<const PathStates*> all;
  for (const auto& x : p) all.push_back(&x);
  for (const auto& x : q) all.push_back(&x);
  const auto n = static_cast<Eigen::Index>(all.size());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) pairs.emplace_back(i, j);
  }
  Eigen::MatrixXd gram(n, n);
  parallel_for(pairs.size(), [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    const double v = signature_kernel(*all[i], *all[j], cfg);
    gram(i, j) = v;
    gram(j, i) = v;
  });
  return gram;
}

double mmd_from_gram(const Eigen::MatrixXd& gram, const std::vector<Eigen::Index>& x, const std::vector<Eigen::Index>& y) {
  const auto n = static_cast<double>(x.size());
  const auto m = static_cast<double>(y.size());
  if (x.size() < 2 || y.size() < 2) throw DataError("MMD needs at least 2 samples per side");
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (i != j) kxx += gram(x[i], x[j]);
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (i != j) kyy += gram(y[i], y[j]);
    }
  }
  for (auto i : x) {
    for (auto j : y) kxy += gram(i, j);
  }
  return kxx / (n * (n - 1.0)) + kyy / (m * (m - 1.0)) - 2.0 * kxy / (n * m);
}

namespace {

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> identity_split(std::size_t np, std::size_t nq) {
  std::vector<Eigen::Index> x(np), y(nq);
  std::iota(x.begin(), x.end(), Eigen::Index{0});
  std::iota(y.begin(), y.end(), static_cast<Eigen::Index>(np));
  return {x, y};
}

}  // namespace

MmdResult mmd_unbiased(const std::vector<PathStates>& p, const std::vector<PathStates>& q, const MmdConfig& cfg) {
  cfg.validate();
  if (p.size() < 2 || q.size() < 2) throw DataError("MMD needs at least 2 paths per sample");
  const MmdConfig resolved = resolve_bandwidth(cfg, p, q);
  const Eigen::MatrixXd gram = pooled_gram(p, q, resolved);
  const auto [x, y] = identity_split(p.size(), q.size());
  return {mmd_from_gram(gram, x, y), resolved.bandwidth};
}

double PermutationTest::null_mean() const {
  if (null.empty()) return 0.0;
  return std::accumulate(null.begin(), null.end(), 0.0) / static_cast<double>(null.size());
}

double PermutationTest::null_sd() const {
  if (null.size() < 2) return 0.0;
  const double mu = null_mean();
  double ss = 0.0;
  for (double v : null) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(null.size() - 1));
}

double PermutationTest::null_quantile(double q) const {
  if (null.empty()) return 0.0;
  std::vector<double> sorted = null;
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double PermutationTest::p_value() const {
  std::size_t above = 0;
  for (double v : null) above += v >= mmd2 ? 1 : 0;
  return static_cast<double>(1 + above) / static_cast<double>(1 + null.size());
}

PermutationTest permutation_test(const std::vector<PathStates>& p, const std::vector<PathStates>& q,
                                 const MmdConfig& cfg, int permutations, std::uint64_t seed) {
  cfg.validate();
  if (p.size() < 2 || q.size() < 2) throw DataError("MMD needs at least 2 paths per sample");
  const MmdConfig resolved = resolve_bandwidth(cfg, p, q);
  const Eigen::MatrixXd gram = pooled_gram(p, q, resolved);
  PermutationTest out;
  out.bandwidth = resolved.bandwidth;
  const auto [x, y] = identity_split(p.size(), q.size());
  out.mmd2 = mmd_from_gram(gram, x, y);
  const std::size_t total = p.size() + q.size();
  for (int k = 0; k < permutations; ++k) {
    RandomStream rng(seed, {0x9e3, static_cast<std::uint64_t>(k)});
    std::vector<Eigen::Index> idx(total);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (std::size_t i = total - 1; i > 0; --i) {
      std::swap(idx[i], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    }
    const std::vector<Eigen::Index> px(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(p.size()));
    const std::vector<Eigen::Index> py(idx.begin() + static_cast<std::ptrdiff_t>(p.size()), idx.end());
    out.null.push_back(mmd_from_gram(gram, px, py));
  }
  return out;
}

}  // namespace sdefim
