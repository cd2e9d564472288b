#include "sdefim/losses.hpp"

#include <algorithm>
#include <cmath>

#include "sdefim/error.hpp"

namespace sdefim {

double loss_l1(const Eigen::VectorXd& drift_hat, const Eigen::VectorXd& drift, const Eigen::VectorXd& amp_hat,
               const Eigen::VectorXd& amp, const Eigen::VectorXd& mask) {
  const auto n = mask.size();
  if (drift_hat.size() != n || drift.size() != n || amp_hat.size() != n || amp.size() != n) {
    throw DimensionError("loss_l1: vectors must share the mask length");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    const double ef = drift_hat[i] - drift[i];
    const double ea = amp_hat[i] - amp[i];
    total += mask[i] * (ef * ef + ea * ea);
  }
  return total;
}

double loss_weighted(double l1, double u) {
  const double uc = std::clamp(u, -kUncertaintyClamp, kUncertaintyClamp);
  return std::exp(-uc) * l1 + uc;
}

Eigen::MatrixXd sample_locations(const ObservationSet& set, int count, RandomStream& rng) {
  if (set.empty()) throw DataError("cannot sample locations from an empty set");
  if (count < 1) throw ConfigError("location count must be >= 1");
  const Eigen::RowVectorXd lo = set.y.colwise().minCoeff();
  const Eigen::RowVectorXd hi = set.y.colwise().maxCoeff();
  Eigen::MatrixXd out(count, set.dim);
  for (int q = 0; q < count; ++q) {
    for (int j = 0; j < set.dim; ++j) out(q, j) = lo[j] + (hi[j] - lo[j]) * rng.uniform();
  }
  return out;
}

FieldTargets normalized_targets(const SdeSystem& sys, const Eigen::MatrixXd& locations, const NormalizationRecord& rec) {
  if (locations.cols() != sys.dim()) throw DimensionError("target locations do not match the system dimension");
  FieldTargets t;
  t.drift.resize(locations.rows(), sys.dim());
  t.amplitude.resize(locations.rows(), sys.dim());
  for (Eigen::Index q = 0; q < locations.rows(); ++q) {
    const Eigen::VectorXd x = denormalize_location(locations.row(q).transpose(), rec);
    const Eigen::VectorXd f = sys.eval_drift(x);
    const auto g = sys.eval_diffusion(x);
    const FieldValues v = normalize_fields(f, g.amplitude, rec);
    t.drift.row(q) = v.drift.transpose();
    t.amplitude.row(q) = v.amplitude.transpose();
  }
  return t;
}

PretrainingLoss pretraining_loss(ad::Var drift_hat, ad::Var amp_hat, ad::Var u, const FieldTargets& targets) {
  ad::Tape& tape = *drift_hat.tape();
  const auto d = targets.drift.cols();
  const ad::Var ef = ad::sub(ad::slice_cols(drift_hat, 0, d), tape.constant(targets.drift));
  const ad::Var ea = ad::sub(ad::slice_cols(amp_hat, 0, d), tape.constant(targets.amplitude));
  const ad::Var l1 = ad::row_sum(ad::add(ad::square(ef), ad::square(ea)));
  const ad::Var weighted = ad::add(ad::mul(ad::exp(ad::scale(u, -1.0)), l1), u);
  PretrainingLoss out;
  out.weighted = ad::mean(weighted);
  out.l1 = l1.value().mean();
  out.mean_u = u.value().mean();
  return out;
}

}  // namespace sdefim
