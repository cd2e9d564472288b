#include "sdefim/corruption.hpp"

#include <algorithm>
#include <limits>

#include "sdefim/error.hpp"

namespace sdefim {

PathBundle thin_bernoulli(const PathBundle& bundle, double eta, const RandomStream& rng) {
  if (!(eta > 0.0) || eta > 1.0) throw ConfigError("survival probability must lie in (0, 1]");
  PathBundle out;
  out.dim = bundle.dim;
  out.divergence = bundle.divergence;
  out.paths.reserve(bundle.paths.size());
  for (std::size_t k = 0; k < bundle.paths.size(); ++k) {
    const Path& in = bundle.paths[k];
    RandomStream draws = rng.split(k);
    std::vector<int> keep;
    keep.reserve(in.times.size());
    for (int i = 0; i < in.length(); ++i) {
      const bool survives = draws.bernoulli(eta);
      if (i == 0 || survives) keep.push_back(i);
    }
    Path p;
    p.times.resize(keep.size());
    p.states.resize(static_cast<Eigen::Index>(keep.size()), in.states.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      p.times[r] = in.times[keep[r]];
      p.states.row(static_cast<Eigen::Index>(r)) = in.states.row(keep[r]);
    }
    out.paths.push_back(std::move(p));
  }
  return out;
}

Eigen::VectorXd component_ranges(const PathBundle& bundle) {
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(bundle.dim, std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(bundle.dim, -std::numeric_limits<double>::infinity());
  for (const auto& p : bundle.paths) {
    if (p.states.rows() == 0) continue;
    lo = lo.cwiseMin(p.states.colwise().minCoeff().transpose());
    hi = hi.cwiseMax(p.states.colwise().maxCoeff().transpose());
  }
  Eigen::VectorXd r = 0.5 * (hi - lo);
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    if (!std::isfinite(r[j])) r[j] = 0.0;
  }
  return r;
}

PathBundle add_relative_noise(const PathBundle& bundle, double sigma, const RandomStream& rng) {
  if (sigma < 0.0) throw ConfigError("noise scale must be non-negative");
  PathBundle out = bundle;
  if (sigma == 0.0) return out;
  const Eigen::VectorXd scale = sigma * component_ranges(bundle);
  for (std::size_t k = 0; k < out.paths.size(); ++k) {
    RandomStream draws = rng.split(k);
    auto& states = out.paths[k].states;
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
      for (Eigen::Index j = 0; j < states.cols(); ++j) states(i, j) += scale[j] * draws.normal();
    }
  }
  return out;
}

}  // namespace sdefim
