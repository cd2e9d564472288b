#include "sdefim/optimizer.hpp"

#include <cmath>

#include "sdefim/error.hpp"

namespace sdefim {

AdamWState AdamWState::zeros(Eigen::Index size) {
  return {Eigen::VectorXd::Zero(size), Eigen::VectorXd::Zero(size), 0};
}

bool AdamWState::operator==(const AdamWState& other) const {
  return step == other.step && m.size() == other.m.size() && m == other.m && v == other.v;
}

void adamw_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamWState& state, const AdamWConfig& cfg) {
  if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("optimizer state does not match the parameter vector");
  }
  state.step += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  params.array() -= cfg.lr * ((state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps) +
                              cfg.weight_decay * params.array());
}

}  // namespace sdefim
