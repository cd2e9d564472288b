#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "sdefim/polynomial.hpp"

namespace sdefim {

/// Diagonal diffusion at a point: g = max(0, g_pre) and amplitude = sqrt(g).
struct DiffusionValue {
  Eigen::VectorXd g;
  Eigen::VectorXd amplitude;
};

/// Time-homogeneous Ito SDE dx = f(x) dt + diag(sqrt(g(x))) dW with
/// polynomial drift components f_i and pre-clamp diffusion components g~_i.
class SdeSystem {
 public:
  SdeSystem() = default;
  SdeSystem(std::vector<Polynomial> drift, std::vector<Polynomial> diffusion_pre);

  int dim() const noexcept { return static_cast<int>(drift_.size()); }
  const std::vector<Polynomial>& drift() const noexcept { return drift_; }
  const std::vector<Polynomial>& diffusion_pre() const noexcept { return diffusion_pre_; }

  Eigen::VectorXd eval_drift(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  DiffusionValue eval_diffusion(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Allocation-free variants used in the simulation hot loop.
  void eval_drift_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const;
  void eval_amplitude_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const;

  int drift_degree() const noexcept;
  int diffusion_degree() const noexcept;

  bool operator==(const SdeSystem& other) const;

 private:
  void check_point(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  std::vector<Polynomial> drift_;
  std::vector<Polynomial> diffusion_pre_;
};

/// Structured-text record {dim, drift: [[e1..ed, coeff]...] x d, diffusion_pre: ...}.
nlohmann::json to_json(const SdeSystem& sys);
SdeSystem system_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Polynomial& p);
Polynomial polynomial_from_json(int arity, const nlohmann::json& j);

}  // namespace sdefim
