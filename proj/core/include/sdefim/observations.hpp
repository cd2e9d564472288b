#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "sdefim/random.hpp"
#include "sdefim/simulation.hpp"

namespace sdefim {

/// Transition tuples (y, dy, dy^2, dtau), one row per tuple.
struct ObservationSet {
  int dim = 0;
  Eigen::MatrixXd y;       // N x d, tuple heads
  Eigen::MatrixXd dy;      // N x d
  Eigen::MatrixXd dy2;     // N x d
  Eigen::VectorXd dtau;    // N
  std::vector<int> path_index;

  Eigen::Index size() const noexcept { return y.rows(); }
  bool empty() const noexcept { return size() == 0; }

  /// Rows `rows` in the given order.
  ObservationSet select(std::span<const Eigen::Index> rows) const;
  void validate() const;
};

struct ObservationBuild {
  ObservationSet set;
  int skipped_paths = 0;
};

/// Consecutive pairs within each path; paths with fewer than two
/// observations contribute nothing and are counted in `skipped_paths`.
ObservationBuild to_observation_set(const PathBundle& bundle);

/// Uniformly chosen subset of `count` tuples (all of them if count >= N).
ObservationSet subsample(const ObservationSet& set, Eigen::Index count, RandomStream& rng);

}  // namespace sdefim
