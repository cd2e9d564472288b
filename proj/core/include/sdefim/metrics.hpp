#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "sdefim/model.hpp"
#include "sdefim/sde_system.hpp"
#include "sdefim/signature.hpp"
#include "sdefim/simulation.hpp"

namespace sdefim {

inline constexpr double kDivergenceFilter = 1e4;

/// Regular grid over a box. With d dimensions it holds k^d points for the
/// largest k with k^d <= locations (1024 -> 1024, 32 x 32, 10 x 10 x 10).
struct EvalGrid {
  std::vector<std::pair<double, double>> bounds;
  int locations = 1024;

  int per_axis() const;
  /// Row-major points, first coordinate varying slowest.
  Eigen::MatrixXd points() const;
  void validate() const;
};

/// Field values of a VectorField at explicit locations (U left empty).
VectorFieldEstimate evaluate_field(const VectorField& field, const Eigen::MatrixXd& locations);

struct GridMse {
  double drift = 0.0;
  double diffusion = 0.0;
  std::int64_t evaluated = 0;
  std::int64_t discarded = 0;
};

/// Mean over locations of the summed squared component errors of drift and
/// amplitude. Locations where any estimated or true value exceeds 1e4 in
/// magnitude (or is non-finite) are dropped and counted.
GridMse mse_on_grid(const VectorFieldEstimate& estimate, const SdeSystem& truth);

struct ProtocolConfig {
  MmdConfig mmd;
  int substeps = 1;
  std::uint64_t seed = 0;
  double bound = kDivergenceFilter;
};

struct ProtocolResult {
  double mmd2 = 0.0;
  double bandwidth = 0.0;
  int diverged_paths = 0;
  PathBundle simulated;
};

/// Simulates `candidate` from the first state of every reference path on
/// the reference observation grid and compares the ensembles. An unset RBF
/// bandwidth is taken from the reference states only.
ProtocolResult mmd_protocol(const VectorField& candidate, const PathBundle& reference, const ProtocolConfig& cfg);

std::vector<PathStates> path_states(const PathBundle& bundle);

nlohmann::json to_json(const GridMse& m);

}  // namespace sdefim
