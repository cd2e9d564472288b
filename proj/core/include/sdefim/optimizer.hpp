#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "json.hpp"

namespace sdefim {

struct AdamWConfig {
  double lr = 1e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;

  static AdamWState zeros(Eigen::Index size);
  bool operator==(const AdamWState& other) const;
};

/// One decoupled-weight-decay Adam update in place.
void adamw_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamWState& state, const AdamWConfig& cfg);

}  // namespace sdefim
