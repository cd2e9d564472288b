#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "sdefim/random.hpp"
#include "sdefim/sde_system.hpp"
#include "sdefim/simulation.hpp"

namespace sdefim {

/// Fixed point (stddev 0) or isotropic Gaussian around `mean`.
struct InitialCondition {
  Eigen::VectorXd mean;
  double stddev = 0.0;

  bool is_point() const noexcept { return stddev == 0.0; }
  Eigen::VectorXd sample(RandomStream& rng) const;
};

/// Observation layout: `paths` paths of `length` points, one every
/// `subsample` fine steps of size `dt`.
struct ObservationLayout {
  double dt = 0.002;
  int subsample = 1;
  int paths = 1;
  int length = 5000;
  double gap() const noexcept { return dt * subsample; }
};

struct CatalogEntry {
  std::string name;
  SdeSystem system;
  InitialCondition initial;
  std::vector<std::pair<double, double>> bounds;
  ObservationLayout context;    // data handed to the model
  ObservationLayout reference;  // paths behind the MMD
};

std::vector<std::string> catalog_names();
/// Throws ConfigError for unknown names.
CatalogEntry canonical_system(const std::string& name);

/// Simulates the layout from the entry's initial condition. Initial states
/// come from rng.split(0), path noise from rng.split(1).
PathBundle simulate_layout(const SdeSystem& sys, const InitialCondition& initial, const ObservationLayout& layout,
                           const RandomStream& rng);

nlohmann::json to_json(const CatalogEntry& entry);

}  // namespace sdefim
