#include "sdefim/normalization.hpp"

#include <cmath>

#include "sdefim/error.hpp"

namespace sdefim {

NormalizationRecord NormalizationRecord::identity(int dim) {
  NormalizationRecord rec;
  rec.mean = Eigen::VectorXd::Zero(dim);
  rec.scale = Eigen::VectorXd::Ones(dim);
  rec.time_factor = 1.0;
  return rec;
}

namespace {

void check_dim(Eigen::Index got, const NormalizationRecord& rec) {
  if (got != rec.dim()) {
    throw DimensionError("vector of dimension " + std::to_string(got) + " used with a " + std::to_string(rec.dim()) +
                         "-dimensional normalization");
  }
}

}  // namespace

std::pair<ObservationSet, NormalizationRecord> fit_and_normalize(const ObservationSet& set, double target_gap) {
  if (set.empty()) throw DataError("cannot normalize an empty observation set");
  if (!(target_gap > 0.0)) throw ConfigError("target gap must be positive");
  set.validate();
  const auto n = static_cast<double>(set.size());
  NormalizationRecord rec;
  rec.target_gap = target_gap;
  rec.mean = set.y.colwise().mean().transpose();
  rec.scale = ((set.y.rowwise() - rec.mean.transpose()).array().square().colwise().sum() / n).sqrt().transpose();
  rec.scale = rec.scale.cwiseMax(kScaleFloor);
  const double mean_log_gap = set.dtau.array().log().mean();
  rec.time_factor = target_gap * std::exp(-mean_log_gap);
  return {apply_normalization(set, rec), rec};
}

ObservationSet apply_normalization(const ObservationSet& set, const NormalizationRecord& rec) {
  check_dim(set.dim, rec);
  ObservationSet out;
  out.dim = set.dim;
  const Eigen::RowVectorXd inv = rec.scale.cwiseInverse().transpose();
  out.y = (set.y.rowwise() - rec.mean.transpose()).array().rowwise() * inv.array();
  out.dy = set.dy.array().rowwise() * inv.array();
  out.dy2 = set.dy2.array().rowwise() * inv.array().square();
  out.dtau = set.dtau * rec.time_factor;
  out.path_index = set.path_index;
  return out;
}

Eigen::VectorXd normalize_location(const Eigen::Ref<const Eigen::VectorXd>& x, const NormalizationRecord& rec) {
  check_dim(x.size(), rec);
  return (x - rec.mean).cwiseQuotient(rec.scale);
}

Eigen::VectorXd denormalize_location(const Eigen::Ref<const Eigen::VectorXd>& x, const NormalizationRecord& rec) {
  check_dim(x.size(), rec);
  return x.cwiseProduct(rec.scale) + rec.mean;
}

Eigen::MatrixXd normalize_locations(const Eigen::MatrixXd& x, const NormalizationRecord& rec) {
  check_dim(x.cols(), rec);
  return (x.rowwise() - rec.mean.transpose()).array().rowwise() / rec.scale.transpose().array();
}

Eigen::MatrixXd denormalize_locations(const Eigen::MatrixXd& x, const NormalizationRecord& rec) {
  check_dim(x.cols(), rec);
  Eigen::MatrixXd out = x.array().rowwise() * rec.scale.transpose().array();
  out.rowwise() += rec.mean.transpose();
  return out;
}

FieldValues renormalize_fields(const Eigen::Ref<const Eigen::VectorXd>& drift,
                               const Eigen::Ref<const Eigen::VectorXd>& amplitude, const NormalizationRecord& rec) {
  check_dim(drift.size(), rec);
  check_dim(amplitude.size(), rec);
  return {rec.time_factor * rec.scale.cwiseProduct(drift), std::sqrt(rec.time_factor) * rec.scale.cwiseProduct(amplitude)};
}

FieldValues normalize_fields(const Eigen::Ref<const Eigen::VectorXd>& drift,
                             const Eigen::Ref<const Eigen::VectorXd>& amplitude, const NormalizationRecord& rec) {
  check_dim(drift.size(), rec);
  check_dim(amplitude.size(), rec);
  return {drift.cwiseQuotient(rec.scale) / rec.time_factor,
          amplitude.cwiseQuotient(rec.scale) / std::sqrt(rec.time_factor)};
}

nlohmann::json to_json(const NormalizationRecord& rec) {
  return {{"mean", std::vector<double>(rec.mean.data(), rec.mean.data() + rec.mean.size())},
          {"scale", std::vector<double>(rec.scale.data(), rec.scale.data() + rec.scale.size())},
          {"time_factor", rec.time_factor},
          {"target_gap", rec.target_gap}};
}

NormalizationRecord normalization_from_json(const nlohmann::json& j) {
  NormalizationRecord rec;
  try {
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    if (mean.size() != scale.size()) throw FormatError("normalization mean and scale differ in length");
    rec.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    rec.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    rec.time_factor = j.at("time_factor").get<double>();
    rec.target_gap = j.value("target_gap", kDefaultTargetGap);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed normalization record: ") + e.what());
  }
  return rec;
}

}  // namespace sdefim
