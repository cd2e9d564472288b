#pragma once

#include "sdefim/random.hpp"
#include "sdefim/simulation.hpp"

namespace sdefim {

/// Keeps each observation with probability eta; the first observation of
/// each path always survives. Path k draws from `rng.split(k)`.
PathBundle thin_bernoulli(const PathBundle& bundle, double eta, const RandomStream& rng);

/// Half of (max - min) of component j over every observation in the bundle.
Eigen::VectorXd component_ranges(const PathBundle& bundle);

/// Adds N(0, (sigma * r_j)^2) to component j of every observation.
PathBundle add_relative_noise(const PathBundle& bundle, double sigma, const RandomStream& rng);

}  // namespace sdefim
