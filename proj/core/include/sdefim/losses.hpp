#pragma once

#include <Eigen/Core>

#include "sdefim/autodiff.hpp"
#include "sdefim/normalization.hpp"
#include "sdefim/observations.hpp"
#include "sdefim/random.hpp"
#include "sdefim/sde_system.hpp"

namespace sdefim {

inline constexpr double kUncertaintyClamp = 20.0;

/// sum_i mask_i [(f^_i - f_i)^2 + (a^_i - a_i)^2] at one location.
double loss_l1(const Eigen::VectorXd& drift_hat, const Eigen::VectorXd& drift, const Eigen::VectorXd& amp_hat,
               const Eigen::VectorXd& amp, const Eigen::VectorXd& mask);

/// exp(-U) l1 + U with U clamped to [-20, 20].
double loss_weighted(double l1, double u);

/// Q points uniform over the bounding box of the tuple heads.
Eigen::MatrixXd sample_locations(const ObservationSet& set, int count, RandomStream& rng);

/// True drift and amplitude mapped into the normalized domain (Q x d).
struct FieldTargets {
  Eigen::MatrixXd drift;
  Eigen::MatrixXd amplitude;
};
FieldTargets normalized_targets(const SdeSystem& sys, const Eigen::MatrixXd& normalized_locations,
                                const NormalizationRecord& rec);

struct PretrainingLoss {
  ad::Var weighted;       // 1 x 1, mean over locations
  double l1 = 0.0;        // mean over locations
  double mean_u = 0.0;
};

/// Tape version of the weighted objective. Head outputs are Q x d_max;
/// only the first d channels enter the loss.
PretrainingLoss pretraining_loss(ad::Var drift_hat, ad::Var amp_hat, ad::Var u, const FieldTargets& targets);

}  // namespace sdefim
