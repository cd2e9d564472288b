#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "sdefim/polynomial.hpp"
#include "sdefim/random.hpp"
#include "sdefim/sde_system.hpp"
#include "sdefim/simulation.hpp"

namespace sdefim {

/// One row of the observation-grid table: fine step, subsampling factor,
/// number of paths K and observations per path L.
struct GridPreset {
  double dt = 0.002;
  int subsample = 5;
  int paths = 25;
  int length = 512;

  double gap() const noexcept { return dt * subsample; }
  double horizon() const noexcept { return gap() * length; }
};

/// The three grid rows used for pretraining data (equal shares).
std::vector<GridPreset> default_grid_presets();

struct PriorConfig {
  int d_max = 3;
  int drift_max_degree = 3;
  int diffusion_max_degree = 2;
  double bound = 100.0;
  std::vector<GridPreset> presets = default_grid_presets();
  /// Relative counts for dimensions 1..d_max (default 1D:2D:3D = 1:2:3).
  std::vector<int> dim_ratio = {1, 2, 3};
  int max_attempts = 10000;
  /// Desk-scale overrides of K and L applied to every preset row.
  std::optional<int> paths_override;
  std::optional<int> length_override;
  /// Keep the uncorrupted coarse bundle alongside the observed one.
  bool keep_clean = true;

  GridPreset effective_preset(int index) const;
  void validate() const;
};

struct CorruptionConfig {
  double noise_scale_max = 0.1;      // sigma ~ U[0, noise_scale_max]
  double survival_min = 0.9;         // eta ~ U[survival_min, 1]
  double noisy_fraction = 1.0 / 3;   // independent assignment per equation
  double irregular_fraction = 1.0 / 3;

  void validate() const;
};

struct CorruptionInfo {
  int preset = 0;
  bool noisy = false;
  bool irregular = false;
  double sigma = 0.0;
  double eta = 1.0;

  bool operator==(const CorruptionInfo&) const = default;
};

struct EquationRecord {
  SdeSystem system;
  PathBundle clean;
  PathBundle observed;
  CorruptionInfo corruption;

  bool operator==(const EquationRecord&) const = default;
};

enum class RejectReason : std::uint8_t { NonFinite, Threshold };

struct Rejected {
  RejectReason reason;
};

using GenerationResult = std::variant<EquationRecord, Rejected>;

/// Hierarchical sparse polynomial prior: number of degrees, degree set,
/// monomial counts per degree, exponent sets, then N(0,1) coefficients.
Polynomial sample_polynomial(int arity, int max_degree, RandomStream& rng);

/// d independent drift (degree <= drift_max_degree) and pre-clamp diffusion
/// (degree <= diffusion_max_degree) components.
SdeSystem sample_system(int d, const PriorConfig& cfg, RandomStream& rng);

/// Samples a system and K standard-normal initial states, simulates on the
/// preset's fine grid and either rejects it or subsamples to L observations.
GenerationResult generate_equation(int d, int preset, const PriorConfig& cfg, RandomStream& rng);

/// Same as generate_equation for a given system and initial states.
GenerationResult simulate_candidate(const SdeSystem& sys, int preset, const PriorConfig& cfg,
                                    const std::vector<Eigen::VectorXd>& initial_states, const RandomStream& rng);

struct RejectionStats {
  int dim = 0;
  std::int64_t candidates = 0;
  std::int64_t non_finite = 0;
  std::int64_t threshold = 0;

  double rate() const noexcept {
    return candidates == 0 ? 0.0 : static_cast<double>(non_finite + threshold) / static_cast<double>(candidates);
  }
};

/// Draws `candidates` independent (system, preset) pairs of dimension d and
/// counts how many the rejection criteria discard.
RejectionStats measure_rejection(int d, std::int64_t candidates, const PriorConfig& cfg, std::uint64_t seed);

nlohmann::json to_json(const PriorConfig& cfg);
PriorConfig prior_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CorruptionConfig& cfg);
CorruptionConfig corruption_config_from_json(const nlohmann::json& j);

}  // namespace sdefim
