#include "sdefim/sde_system.hpp"

#include <algorithm>
#include <cmath>

#include "sdefim/error.hpp"

namespace sdefim {

SdeSystem::SdeSystem(std::vector<Polynomial> drift, std::vector<Polynomial> diffusion_pre)
    : drift_(std::move(drift)), diffusion_pre_(std::move(diffusion_pre)) {
  if (drift_.empty()) throw DimensionError("SDE system needs at least one dimension");
  if (diffusion_pre_.size() != drift_.size()) {
    throw DimensionError("drift and diffusion must have the same number of components");
  }
  const int d = dim();
  for (const auto& p : drift_) {
    if (p.arity() != d) throw DimensionError("drift component arity differs from system dimension");
  }
  for (const auto& p : diffusion_pre_) {
    if (p.arity() != d) throw DimensionError("diffusion component arity differs from system dimension");
  }
}

void SdeSystem::check_point(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim()) {
    throw DimensionError("state of dimension " + std::to_string(x.size()) + " passed to a " +
                         std::to_string(dim()) + "-dimensional system");
  }
}

Eigen::VectorXd SdeSystem::eval_drift(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd out(dim());
  eval_drift_into(x, out);
  return out;
}

void SdeSystem::eval_drift_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const {
  check_point(x);
  for (int i = 0; i < dim(); ++i) out[i] = drift_[i](x);
}

DiffusionValue SdeSystem::eval_diffusion(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_point(x);
  DiffusionValue v{Eigen::VectorXd(dim()), Eigen::VectorXd(dim())};
  for (int i = 0; i < dim(); ++i) {
    const double pre = diffusion_pre_[i](x);
    // NaN propagates through the clamp on purpose.
    v.g[i] = std::isnan(pre) ? pre : std::max(0.0, pre);
    v.amplitude[i] = std::sqrt(v.g[i]);
  }
  return v;
}

void SdeSystem::eval_amplitude_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out) const {
  check_point(x);
  for (int i = 0; i < dim(); ++i) {
    const double pre = diffusion_pre_[i](x);
    out[i] = std::isnan(pre) ? pre : std::sqrt(std::max(0.0, pre));
  }
}

int SdeSystem::drift_degree() const noexcept {
  int d = -1;
  for (const auto& p : drift_) d = std::max(d, p.degree());
  return d;
}

int SdeSystem::diffusion_degree() const noexcept {
  int d = -1;
  for (const auto& p : diffusion_pre_) d = std::max(d, p.degree());
  return d;
}

bool SdeSystem::operator==(const SdeSystem& other) const {
  return drift_ == other.drift_ && diffusion_pre_ == other.diffusion_pre_;
}

nlohmann::json to_json(const Polynomial& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : p.terms()) {
    nlohmann::json row = nlohmann::json::array();
    for (int e : t.index.exponents) row.push_back(e);
    row.push_back(t.coefficient);
    terms.push_back(std::move(row));
  }
  return terms;
}

Polynomial polynomial_from_json(int arity, const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("polynomial must be a list of terms");
  std::vector<Term> terms;
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<int>(row.size()) != arity + 1) {
      throw FormatError("polynomial term must hold " + std::to_string(arity) + " exponents and a coefficient");
    }
    MultiIndex idx;
    for (int k = 0; k < arity; ++k) {
      const int e = row[k].get<int>();
      if (e < 0) throw FormatError("negative exponent in polynomial term");
      idx.exponents.push_back(e);
    }
    terms.push_back(Term{std::move(idx), row[arity].get<double>()});
  }
  return Polynomial(arity, std::move(terms));
}

nlohmann::json to_json(const SdeSystem& sys) {
  nlohmann::json j;
  j["dim"] = sys.dim();
  j["drift"] = nlohmann::json::array();
  j["diffusion_pre"] = nlohmann::json::array();
  for (const auto& p : sys.drift()) j["drift"].push_back(to_json(p));
  for (const auto& p : sys.diffusion_pre()) j["diffusion_pre"].push_back(to_json(p));
  return j;
}

SdeSystem system_from_json(const nlohmann::json& j) {
  try {
    const int d = j.at("dim").get<int>();
    if (d < 1) throw FormatError("system dimension must be positive");
    const auto& drift = j.at("drift");
    const auto& diff = j.at("diffusion_pre");
    if (static_cast<int>(drift.size()) != d || static_cast<int>(diff.size()) != d) {
      throw FormatError("system record needs one drift and one diffusion polynomial per dimension");
    }
    std::vector<Polynomial> f, g;
    for (const auto& p : drift) f.push_back(polynomial_from_json(d, p));
    for (const auto& p : diff) g.push_back(polynomial_from_json(d, p));
    return SdeSystem(std::move(f), std::move(g));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed system record: ") + e.what());
  }
}

}  // namespace sdefim
