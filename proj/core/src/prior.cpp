#include "sdefim/prior.hpp"

#include <algorithm>
#include <numeric>

#include "sdefim/error.hpp"
#include "sdefim/parallel.hpp"

namespace sdefim {

std::vector<GridPreset> default_grid_presets() {
  return {
      GridPreset{0.004, 25, 100, 128},
      GridPreset{0.002, 5, 25, 512},
      GridPreset{0.001, 1, 12, 1024},
  };
}

GridPreset PriorConfig::effective_preset(int index) const {
  if (index < 0 || index >= static_cast<int>(presets.size())) {
    throw ConfigError("grid preset index " + std::to_string(index) + " out of range");
  }
  GridPreset p = presets[index];
  if (paths_override) p.paths = *paths_override;
  if (length_override) p.length = *length_override;
  return p;
}

void PriorConfig::validate() const {
  if (d_max < 1) throw ConfigError("d_max must be positive");
  if (drift_max_degree < 0 || diffusion_max_degree < 0) throw ConfigError("maximum degrees must be non-negative");
  if (!(bound > 0.0)) throw ConfigError("rejection threshold B must be positive");
  if (presets.empty()) throw ConfigError("at least one grid preset is required");
  for (const auto& p : presets) {
    if (!(p.dt > 0.0) || p.subsample < 1 || p.paths < 1 || p.length < 2) {
      throw ConfigError("grid preset needs dt > 0, subsample >= 1, K >= 1 and L >= 2");
    }
  }
  if (static_cast<int>(dim_ratio.size()) != d_max) throw ConfigError("dimension ratio needs one entry per dimension");
  for (int r : dim_ratio) {
    if (r < 0) throw ConfigError("dimension ratios must be non-negative");
  }
  if (std::accumulate(dim_ratio.begin(), dim_ratio.end(), 0) <= 0) throw ConfigError("dimension ratios sum to zero");
  if (max_attempts < 1) throw ConfigError("max_attempts must be positive");
  if (paths_override && *paths_override < 1) throw ConfigError("paths override must be positive");
  if (length_override && *length_override < 2) throw ConfigError("length override must be at least 2");
}

void CorruptionConfig::validate() const {
  if (noise_scale_max < 0.0) throw ConfigError("noise scale must be non-negative");
  if (!(survival_min > 0.0) || survival_min > 1.0) throw ConfigError("survival probability must lie in (0, 1]");
  if (noisy_fraction < 0.0 || noisy_fraction > 1.0 || irregular_fraction < 0.0 || irregular_fraction > 1.0) {
    throw ConfigError("corruption fractions must lie in [0, 1]");
  }
}

namespace {

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// First k entries of a partial Fisher-Yates shuffle of {0..n-1}.
std::vector<int> choose_subset(int n, int k, RandomStream& rng) {
  std::vector<int> items(n);
  std::iota(items.begin(), items.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<int>(rng.uniform_int(i, n - 1));
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  return items;
}

}  // namespace

Polynomial sample_polynomial(int arity, int max_degree, RandomStream& rng) {
  if (arity < 1) throw ConfigError("polynomial arity must be positive");
  if (max_degree < 0) throw ConfigError("maximum degree must be non-negative");
  const int n_degrees = static_cast<int>(rng.uniform_int(1, std::max(1, max_degree)));
  const auto degrees = choose_subset(max_degree + 1, n_degrees, rng);
  std::vector<Term> terms;
  for (int m : degrees) {
    const auto candidates = enumerate_multi_indices(arity, m);
    const auto available = binomial(m + arity - 1, arity - 1);
    const int n_monomials = static_cast<int>(rng.uniform_int(1, available));
    for (int idx : choose_subset(static_cast<int>(candidates.size()), n_monomials, rng)) {
      terms.push_back(Term{candidates[idx], 0.0});
    }
  }
  // Coefficients are drawn after the structure so the structural draws do
  // not depend on how many normals were consumed.
  for (auto& t : terms) t.coefficient = rng.normal();
  return Polynomial(arity, std::move(terms));
}

SdeSystem sample_system(int d, const PriorConfig& cfg, RandomStream& rng) {
  if (d < 1 || d > cfg.d_max) throw ConfigError("system dimension must lie in [1, d_max]");
  std::vector<Polynomial> drift, diffusion;
  for (int i = 0; i < d; ++i) drift.push_back(sample_polynomial(d, cfg.drift_max_degree, rng));
  for (int i = 0; i < d; ++i) diffusion.push_back(sample_polynomial(d, cfg.diffusion_max_degree, rng));
  return SdeSystem(std::move(drift), std::move(diffusion));
}

GenerationResult simulate_candidate(const SdeSystem& sys, int preset_index, const PriorConfig& cfg,
                                    const std::vector<Eigen::VectorXd>& initial_states, const RandomStream& rng) {
  const GridPreset preset = cfg.effective_preset(preset_index);
  SimulationGrid grid{preset.dt, preset.length * preset.subsample};
  SimulationOptions options;
  options.record_stride = preset.subsample;
  options.bound = cfg.bound;
  options.stop_on_divergence = true;
  PathBundle bundle = simulate(sys, grid, initial_states, rng, options);
  switch (bundle.first_divergence()) {
    case Divergence::NonFinite:
      return Rejected{RejectReason::NonFinite};
    case Divergence::Threshold:
      return Rejected{RejectReason::Threshold};
    case Divergence::None:
      break;
  }
  // Observations at k * gap for k = 0..L-1; the final fine state only takes
  // part in the rejection check.
  for (auto& path : bundle.paths) {
    path.times.resize(preset.length);
    path.states.conservativeResize(preset.length, Eigen::NoChange);
  }
  EquationRecord record;
  record.system = sys;
  record.corruption.preset = preset_index;
  record.observed = bundle;
  record.clean = std::move(bundle);
  return record;
}

GenerationResult generate_equation(int d, int preset, const PriorConfig& cfg, RandomStream& rng) {
  SdeSystem sys = sample_system(d, cfg, rng);
  const GridPreset p = cfg.effective_preset(preset);
  std::vector<Eigen::VectorXd> initial(p.paths, Eigen::VectorXd(d));
  for (auto& x0 : initial) {
    for (int i = 0; i < d; ++i) x0[i] = rng.normal();
  }
  const RandomStream noise = rng.split(0x5eed);
  return simulate_candidate(sys, preset, cfg, initial, noise);
}

RejectionStats measure_rejection(int d, std::int64_t candidates, const PriorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::int8_t> outcome(static_cast<std::size_t>(candidates), -1);
  const RandomStream root(seed, {0x7e1ec7, static_cast<std::uint64_t>(d)});
  const auto n_presets = static_cast<std::int64_t>(cfg.presets.size());
  parallel_for(outcome.size(), [&](std::size_t c) {
    RandomStream rng = root.split(c);
    const int preset = static_cast<int>(rng.uniform_int(0, n_presets - 1));
    const auto result = generate_equation(d, preset, cfg, rng);
    if (const auto* rej = std::get_if<Rejected>(&result)) {
      outcome[c] = static_cast<std::int8_t>(rej->reason);
    }
  });
  RejectionStats stats;
  stats.dim = d;
  stats.candidates = candidates;
  for (auto o : outcome) {
    if (o == static_cast<std::int8_t>(RejectReason::NonFinite)) ++stats.non_finite;
    if (o == static_cast<std::int8_t>(RejectReason::Threshold)) ++stats.threshold;
  }
  return stats;
}

nlohmann::json to_json(const PriorConfig& cfg) {
  nlohmann::json j;
  j["d_max"] = cfg.d_max;
  j["drift_max_degree"] = cfg.drift_max_degree;
  j["diffusion_max_degree"] = cfg.diffusion_max_degree;
  j["bound"] = cfg.bound;
  j["presets"] = nlohmann::json::array();
  for (const auto& p : cfg.presets) {
    j["presets"].push_back({{"dt", p.dt}, {"subsample", p.subsample}, {"paths", p.paths}, {"length", p.length}});
  }
  j["dim_ratio"] = cfg.dim_ratio;
  j["max_attempts"] = cfg.max_attempts;
  j["paths_override"] = cfg.paths_override ? nlohmann::json(*cfg.paths_override) : nlohmann::json(nullptr);
  j["length_override"] = cfg.length_override ? nlohmann::json(*cfg.length_override) : nlohmann::json(nullptr);
  j["keep_clean"] = cfg.keep_clean;
  return j;
}

PriorConfig prior_config_from_json(const nlohmann::json& j) {
  PriorConfig cfg;
  try {
    cfg.d_max = j.value("d_max", cfg.d_max);
    cfg.drift_max_degree = j.value("drift_max_degree", cfg.drift_max_degree);
    cfg.diffusion_max_degree = j.value("diffusion_max_degree", cfg.diffusion_max_degree);
    cfg.bound = j.value("bound", cfg.bound);
    if (j.contains("presets")) {
      cfg.presets.clear();
      for (const auto& p : j.at("presets")) {
        cfg.presets.push_back(GridPreset{p.at("dt").get<double>(), p.at("subsample").get<int>(),
                                         p.at("paths").get<int>(), p.at("length").get<int>()});
      }
    }
    if (j.contains("dim_ratio")) cfg.dim_ratio = j.at("dim_ratio").get<std::vector<int>>();
    cfg.max_attempts = j.value("max_attempts", cfg.max_attempts);
    if (j.contains("paths_override") && !j.at("paths_override").is_null()) {
      cfg.paths_override = j.at("paths_override").get<int>();
    }
    if (j.contains("length_override") && !j.at("length_override").is_null()) {
      cfg.length_override = j.at("length_override").get<int>();
    }
    cfg.keep_clean = j.value("keep_clean", cfg.keep_clean);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prior config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const CorruptionConfig& cfg) {
  return {{"noise_scale_max", cfg.noise_scale_max},
          {"survival_min", cfg.survival_min},
          {"noisy_fraction", cfg.noisy_fraction},
          {"irregular_fraction", cfg.irregular_fraction}};
}

CorruptionConfig corruption_config_from_json(const nlohmann::json& j) {
  CorruptionConfig cfg;
  try {
    cfg.noise_scale_max = j.value("noise_scale_max", cfg.noise_scale_max);
    cfg.survival_min = j.value("survival_min", cfg.survival_min);
    cfg.noisy_fraction = j.value("noisy_fraction", cfg.noisy_fraction);
    cfg.irregular_fraction = j.value("irregular_fraction", cfg.irregular_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed corruption config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace sdefim
