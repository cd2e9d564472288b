#pragma once

#include <utility>

#include <Eigen/Core>

#include "json.hpp"
#include "sdefim/observations.hpp"
#include "sdefim/sde_system.hpp"

namespace sdefim {

inline constexpr double kScaleFloor = 1e-8;
inline constexpr double kDefaultTargetGap = 0.01;

/// Spatial map y -> S^{-1}(y - mean) and temporal map tau -> c * tau with
/// c = target_gap * exp(-mean(ln dtau)).
struct NormalizationRecord {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  double time_factor = 1.0;
  double target_gap = kDefaultTargetGap;

  int dim() const noexcept { return static_cast<int>(mean.size()); }
  static NormalizationRecord identity(int dim);
};

/// Fits the record on the tuple heads and gaps, then maps y, dy, dy^2 and
/// dtau into the normalized domain. Population standard deviation; each
/// scale is floored at kScaleFloor.
std::pair<ObservationSet, NormalizationRecord> fit_and_normalize(const ObservationSet& set,
                                                                 double target_gap = kDefaultTargetGap);

/// Applies an existing record to a set.
ObservationSet apply_normalization(const ObservationSet& set, const NormalizationRecord& rec);

Eigen::VectorXd normalize_location(const Eigen::Ref<const Eigen::VectorXd>& x, const NormalizationRecord& rec);
Eigen::VectorXd denormalize_location(const Eigen::Ref<const Eigen::VectorXd>& x, const NormalizationRecord& rec);
/// Row-wise versions for Q x d batches.
Eigen::MatrixXd normalize_locations(const Eigen::MatrixXd& x, const NormalizationRecord& rec);
Eigen::MatrixXd denormalize_locations(const Eigen::MatrixXd& x, const NormalizationRecord& rec);

struct FieldValues {
  Eigen::VectorXd drift;
  Eigen::VectorXd amplitude;
};

/// Normalized-domain (drift, amplitude) -> original domain:
/// drift = c S drift~, amplitude = sqrt(c) S amplitude~.
FieldValues renormalize_fields(const Eigen::Ref<const Eigen::VectorXd>& drift,
                               const Eigen::Ref<const Eigen::VectorXd>& amplitude, const NormalizationRecord& rec);
/// Inverse of renormalize_fields; maps true fields into training targets.
FieldValues normalize_fields(const Eigen::Ref<const Eigen::VectorXd>& drift,
                             const Eigen::Ref<const Eigen::VectorXd>& amplitude, const NormalizationRecord& rec);

nlohmann::json to_json(const NormalizationRecord& rec);
NormalizationRecord normalization_from_json(const nlohmann::json& j);

}  // namespace sdefim
