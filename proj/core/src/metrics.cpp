#include "sdefim/metrics.hpp"

#include <cmath>

#include "sdefim/error.hpp"

namespace sdefim {

int EvalGrid::per_axis() const {
  const auto d = static_cast<int>(bounds.size());
  int k = static_cast<int>(std::floor(std::pow(static_cast<double>(locations), 1.0 / d) + 1e-9));
  while (std::pow(k + 1, d) <= locations) ++k;
  while (k > 1 && std::pow(k, d) > locations) --k;
  return std::max(k, 1);
}

void EvalGrid::validate() const {
  if (bounds.empty()) throw ConfigError("evaluation grid needs at least one dimension");
  if (locations < 1) throw ConfigError("evaluation grid needs at least one location");
  for (const auto& [lo, hi] : bounds) {
    if (!(lo <= hi)) throw ConfigError("evaluation grid bounds must satisfy lower <= upper");
  }
}

Eigen::MatrixXd EvalGrid::points() const {
  validate();
  const auto d = static_cast<int>(bounds.size());
  const int k = per_axis();
  Eigen::Index total = 1;
  for (int i = 0; i < d; ++i) total *= k;
  Eigen::MatrixXd out(total, d);
  for (Eigen::Index row = 0; row < total; ++row) {
    Eigen::Index rem = row;
    for (int j = d - 1; j >= 0; --j) {
      const auto idx = rem % k;
      rem /= k;
      const auto [lo, hi] = bounds[j];
      out(row, j) = k == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(idx) / (k - 1);
    }
  }
  return out;
}

VectorFieldEstimate evaluate_field(const VectorField& field, const Eigen::MatrixXd& locations) {
  if (locations.cols() != field.dim()) throw DimensionError("locations do not match the field dimension");
  VectorFieldEstimate est;
  est.locations = locations;
  field.evaluate(locations, est.drift, est.amplitude);
  est.normalization = NormalizationRecord::identity(field.dim());
  return est;
}

GridMse mse_on_grid(const VectorFieldEstimate& est, const SdeSystem& truth) {
  if (est.locations.cols() != truth.dim()) throw DimensionError("estimate grid does not match the system dimension");
  GridMse out;
  double sf = 0.0, sg = 0.0;
  auto ok = [](const Eigen::VectorXd& v) { return v.allFinite() && v.cwiseAbs().maxCoeff() <= kDivergenceFilter; };
  for (Eigen::Index q = 0; q < est.locations.rows(); ++q) {
    const Eigen::VectorXd x = est.locations.row(q).transpose();
    const Eigen::VectorXd f = truth.eval_drift(x);
    const Eigen::VectorXd a = truth.eval_diffusion(x).amplitude;
    const Eigen::VectorXd fh = est.drift.row(q).transpose();
    const Eigen::VectorXd ah = est.amplitude.row(q).transpose();
    if (!ok(f) || !ok(a) || !ok(fh) || !ok(ah)) {
      ++out.discarded;
      continue;
    }
    sf += (fh - f).squaredNorm();
    sg += (ah - a).squaredNorm();
    ++out.evaluated;
  }
  if (out.evaluated > 0) {
    out.drift = sf / static_cast<double>(out.evaluated);
    out.diffusion = sg / static_cast<double>(out.evaluated);
  } else {
    out.drift = out.diffusion = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::vector<PathStates> path_states(const PathBundle& bundle) {
  std::vector<PathStates> out;
  out.reserve(bundle.paths.size());
  for (const auto& p : bundle.paths) out.push_back(p.states);
  return out;
}

ProtocolResult mmd_protocol(const VectorField& candidate, const PathBundle& reference, const ProtocolConfig& cfg) {
  if (reference.paths.empty()) throw DataError("MMD protocol needs a non-empty reference");
  if (candidate.dim() != reference.dim) throw DimensionError("candidate and reference dimensions differ");
  const auto& times = reference.paths.front().times;
  Eigen::MatrixXd x0(reference.path_count(), reference.dim);
  for (int k = 0; k < reference.path_count(); ++k) {
    const auto& p = reference.paths[k];
    if (p.times != times) throw DataError("reference paths must share one observation grid");
    x0.row(k) = p.states.row(0);
  }
  ProtocolResult out;
  out.simulated = simulate_field(candidate, x0, times, cfg.substeps, RandomStream(cfg.seed, {0x33d}), cfg.bound);
  for (auto d : out.simulated.divergence) out.diverged_paths += d != Divergence::None ? 1 : 0;
  const std::vector<PathStates> ref = path_states(reference);
  // Kernel fixed by the reference alone so scores of different candidates compare.
  const MmdConfig kernel = resolve_bandwidth(cfg.mmd, ref, {});
  const MmdResult r = mmd_unbiased(path_states(out.simulated), ref, kernel);
  out.mmd2 = r.mmd2;
  out.bandwidth = r.bandwidth;
  return out;
}

nlohmann::json to_json(const GridMse& m) {
  return {{"drift_mse", m.drift}, {"diffusion_mse", m.diffusion}, {"evaluated", m.evaluated}, {"discarded", m.discarded}};
}

}  // namespace sdefim
