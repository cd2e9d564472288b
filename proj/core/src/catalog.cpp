#include "sdefim/catalog.hpp"

#include <cmath>

#include "sdefim/error.hpp"

namespace sdefim {

Eigen::VectorXd InitialCondition::sample(RandomStream& rng) const {
  Eigen::VectorXd x = mean;
  if (stddev > 0.0) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += stddev * rng.normal();
  }
  return x;
}

namespace {

using Monomial = std::pair<std::vector<int>, double>;

Polynomial poly(int arity, std::initializer_list<Monomial> terms) {
  Polynomial p(arity);
  for (const auto& [e, c] : terms) p.add_term(MultiIndex{e}, c);
  return p;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

CatalogEntry planar(std::string name, std::vector<Polynomial> drift, std::vector<Polynomial> diffusion,
                    Eigen::VectorXd x0, std::vector<std::pair<double, double>> bounds) {
  CatalogEntry e;
  e.name = std::move(name);
  e.system = SdeSystem(std::move(drift), std::move(diffusion));
  e.initial = {std::move(x0), 0.0};
  e.bounds = std::move(bounds);
  e.context = {0.002, 1, 1, 5000};
  e.reference = {0.002, 1, 100, 500};
  return e;
}

Polynomial unit2() { return Polynomial::constant(2, 1.0); }

}  // namespace

std::vector<std::string> catalog_names() {
  return {"double-well", "wang-2d", "damped-linear", "damped-cubic", "duffing", "selkov-glycolysis", "hopf", "lorenz"};
}

CatalogEntry canonical_system(const std::string& name) {
  if (name == "double-well") {
    return planar(name, {poly(1, {{{1}, 4.0}, {{3}, -4.0}})}, {poly(1, {{{0}, 4.0}, {{2}, -1.25}})}, vec({0.0}),
                  {{-2.0, 2.0}});
  }
  if (name == "wang-2d") {
    return planar(name,
                  {poly(2, {{{1, 0}, 1.0}, {{0, 1}, -1.0}, {{1, 2}, -1.0}, {{3, 0}, -1.0}}),
                   poly(2, {{{1, 0}, 1.0}, {{0, 1}, 1.0}, {{2, 1}, -1.0}, {{0, 3}, -1.0}})},
                  {poly(2, {{{0, 0}, 1.0}, {{0, 2}, 1.0}}), poly(2, {{{0, 0}, 1.0}, {{2, 0}, 1.0}})}, vec({1.5, 1.5}),
                  {{-4.0, 4.0}, {-4.0, 4.0}});
  }
  if (name == "damped-linear") {
    return planar(name, {poly(2, {{{1, 0}, -0.1}, {{0, 1}, 2.0}}), poly(2, {{{1, 0}, -2.0}, {{0, 1}, -0.1}})},
                  {unit2(), unit2()}, vec({2.5, -5.0}), {{-2.0, 2.0}, {-2.0, 2.0}});
  }
  if (name == "damped-cubic") {
    return planar(name, {poly(2, {{{3, 0}, -0.1}, {{0, 3}, 2.0}}), poly(2, {{{3, 0}, -2.0}, {{0, 3}, -0.1}})},
                  {unit2(), unit2()}, vec({0.0, -1.0}), {{-2.0, 2.0}, {-2.0, 2.0}});
  }
  if (name == "duffing") {
    return planar(name, {poly(2, {{{0, 1}, 1.0}}), poly(2, {{{3, 0}, -1.0}, {{1, 0}, 1.0}, {{0, 1}, -0.35}})},
                  {unit2(), unit2()}, vec({3.0, 2.0}), {{-4.0, 4.0}, {-4.0, 4.0}});
  }
  if (name == "selkov-glycolysis") {
    return planar(name,
                  {poly(2, {{{1, 0}, -1.0}, {{0, 1}, 0.08}, {{2, 1}, 1.0}}),
                   poly(2, {{{0, 0}, 0.6}, {{0, 1}, -0.08}, {{2, 1}, -1.0}})},
                  {unit2(), unit2()}, vec({0.7, 1.25}), {{-2.0, 4.0}, {-2.0, 4.0}});
  }
  if (name == "hopf") {
    return planar(name,
                  {poly(2, {{{1, 0}, 0.5}, {{0, 1}, 1.0}, {{3, 0}, -1.0}, {{1, 2}, -1.0}}),
                   poly(2, {{{1, 0}, -1.0}, {{0, 1}, 0.5}, {{2, 1}, -1.0}, {{0, 3}, -1.0}})},
                  {unit2(), unit2()}, vec({2.0, 2.0}), {{-2.0, 2.0}, {-2.0, 2.0}});
  }
  if (name == "lorenz") {
    const double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0, alpha = 0.15;
    CatalogEntry e;
    e.name = name;
    const Polynomial g = Polynomial::constant(3, alpha * alpha);
    e.system = SdeSystem({poly(3, {{{0, 1, 0}, sigma}, {{1, 0, 0}, -sigma}}),
                          poly(3, {{{1, 0, 0}, rho}, {{1, 0, 1}, -1.0}, {{0, 1, 0}, -1.0}}),
                          poly(3, {{{1, 1, 0}, 1.0}, {{0, 0, 1}, -beta}})},
                         {g, g, g});
    e.initial = {Eigen::VectorXd::Zero(3), 1.0};
    e.bounds = {{-20.0, 20.0}, {-25.0, 25.0}, {0.0, 50.0}};
    e.context = {0.001, 25, 1024, 41};
    e.reference = {0.001, 25, 128, 41};
    return e;
  }
  throw ConfigError("unknown catalog system '" + name + "'");
}

PathBundle simulate_layout(const SdeSystem& sys, const InitialCondition& initial, const ObservationLayout& layout,
                           const RandomStream& rng) {
  if (layout.paths < 1 || layout.length < 1 || layout.subsample < 1 || !(layout.dt > 0.0)) {
    throw ConfigError("invalid observation layout");
  }
  if (initial.mean.size() != sys.dim()) throw DimensionError("initial condition does not match the system");
  RandomStream init = rng.split(0);
  std::vector<Eigen::VectorXd> x0;
  for (int k = 0; k < layout.paths; ++k) x0.push_back(initial.sample(init));
  SimulationGrid grid{layout.dt, (layout.length - 1) * layout.subsample};
  SimulationOptions opts;
  opts.record_stride = layout.subsample;
  if (grid.n_fine_steps == 0) {
    PathBundle b;
    b.dim = sys.dim();
    for (const auto& x : x0) {
      Path p;
      p.times = {0.0};
      p.states = x.transpose();
      b.paths.push_back(std::move(p));
      b.divergence.push_back(Divergence::None);
    }
    return b;
  }
  return simulate(sys, grid, x0, rng.split(1), opts);
}

nlohmann::json to_json(const CatalogEntry& e) {
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& [lo, hi] : e.bounds) bounds.push_back({lo, hi});
  nlohmann::json mean = nlohmann::json::array();
  for (Eigen::Index i = 0; i < e.initial.mean.size(); ++i) mean.push_back(e.initial.mean[i]);
  auto layout = [](const ObservationLayout& l) {
    return nlohmann::json{{"dt", l.dt}, {"subsample", l.subsample}, {"paths", l.paths}, {"length", l.length}};
  };
  return {{"name", e.name},
          {"system", to_json(e.system)},
          {"initial", {{"mean", mean}, {"stddev", e.initial.stddev}}},
          {"bounds", bounds},
          {"context", layout(e.context)},
          {"reference", layout(e.reference)}};
}

}  // namespace sdefim
