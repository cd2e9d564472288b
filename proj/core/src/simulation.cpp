#include "sdefim/simulation.hpp"

#include <cmath>
#include <numbers>

#include "sdefim/error.hpp"

namespace sdefim {

void SimulationGrid::validate() const {
  if (!(dt > 0.0)) throw ConfigError("simulation step dt must be positive");
  if (n_fine_steps < 1) throw ConfigError("simulation needs at least one fine step");
}

bool Path::operator==(const Path& other) const {
  return times == other.times && states.rows() == other.states.rows() && states.cols() == other.states.cols() &&
         (states.array() == other.states.array()).all();
}

std::size_t PathBundle::observation_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : paths) n += p.times.size();
  return n;
}

bool PathBundle::any_diverged() const noexcept { return first_divergence() != Divergence::None; }

Divergence PathBundle::first_divergence() const noexcept {
  for (auto d : divergence) {
    if (d != Divergence::None) return d;
  }
  return Divergence::None;
}

bool PathBundle::operator==(const PathBundle& other) const {
  return dim == other.dim && paths == other.paths && divergence == other.divergence;
}

namespace {

inline Divergence classify(const Eigen::Ref<const Eigen::VectorXd>& x, double bound) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) return Divergence::NonFinite;
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x[i]) > bound) return Divergence::Threshold;
  }
  return Divergence::None;
}

// Shared by em_step, simulate and simulate_field so all three agree bitwise.
inline void em_update(Eigen::Ref<Eigen::VectorXd> x, const Eigen::Ref<const Eigen::VectorXd>& drift,
                      const Eigen::Ref<const Eigen::VectorXd>& amplitude, double dt, double sqrt_dt,
                      const Eigen::Ref<const Eigen::VectorXd>& eps) {
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = x[i] + drift[i] * dt + amplitude[i] * eps[i] * sqrt_dt;
}

}  // namespace

Eigen::VectorXd em_step(const SdeSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& x, double dt,
                        const Eigen::Ref<const Eigen::VectorXd>& eps) {
  if (eps.size() != sys.dim()) throw DimensionError("noise vector dimension differs from system dimension");
  Eigen::VectorXd drift(sys.dim()), amp(sys.dim());
  sys.eval_drift_into(x, drift);
  sys.eval_amplitude_into(x, amp);
  Eigen::VectorXd out = x;
  em_update(out, drift, amp, dt, std::sqrt(dt), eps);
  return out;
}

PathBundle simulate(const SdeSystem& sys, const SimulationGrid& grid, const std::vector<Eigen::VectorXd>& initial_states,
                    const RandomStream& rng, const SimulationOptions& options) {
  grid.validate();
  if (options.record_stride < 1) throw ConfigError("record stride must be positive");
  const int d = sys.dim();
  for (const auto& x0 : initial_states) {
    if (x0.size() != d) throw DimensionError("initial state dimension differs from system dimension");
  }
  const int records = grid.n_fine_steps / options.record_stride + 1;
  const double sqrt_dt = std::sqrt(grid.dt);

  PathBundle bundle;
  bundle.dim = d;
  bundle.paths.resize(initial_states.size());
  bundle.divergence.assign(initial_states.size(), Divergence::None);

  Eigen::VectorXd x(d), drift(d), amp(d), eps(d);
  for (std::size_t k = 0; k < initial_states.size(); ++k) {
    Path& path = bundle.paths[k];
    path.times.resize(records);
    path.states.setConstant(records, d, std::numeric_limits<double>::quiet_NaN());
    RandomStream noise = rng.split(k);
    x = initial_states[k];
    path.states.row(0) = x.transpose();
    path.times[0] = 0.0;
    Divergence status = classify(x, options.bound);
    for (int r = 1; r < records; ++r) path.times[r] = grid.dt * r * options.record_stride;
    for (int step = 1; step <= grid.n_fine_steps && status == Divergence::None; ++step) {
      sys.eval_drift_into(x, drift);
      sys.eval_amplitude_into(x, amp);
      for (int i = 0; i < d; ++i) eps[i] = noise.normal();
      em_update(x, drift, amp, grid.dt, sqrt_dt, eps);
      status = classify(x, options.bound);
      if (step % options.record_stride == 0) path.states.row(step / options.record_stride) = x.transpose();
    }
    bundle.divergence[k] = status;
    if (status != Divergence::None && options.stop_on_divergence) {
      bundle.paths.resize(k + 1);
      bundle.divergence.resize(k + 1);
      break;
    }
  }
  return bundle;
}

double transition_logdensity(const SdeSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& x_next, double dt) {
  if (!(dt > 0.0)) throw ConfigError("transition time step must be positive");
  if (x_next.size() != sys.dim()) throw DimensionError("target state dimension differs from system dimension");
  const auto drift = sys.eval_drift(x);
  const auto diff = sys.eval_diffusion(x);
  const int d = sys.dim();
  double log_g = 0.0;
  double quad = 0.0;
  for (int i = 0; i < d; ++i) {
    if (!(diff.g[i] > 0.0)) {
      throw DegenerateDiffusionError("transition density undefined: g_" + std::to_string(i + 1) + "(x) = 0");
    }
    log_g += std::log(diff.g[i]);
    const double r = x_next[i] - x[i] - drift[i] * dt;
    quad += r * r / diff.g[i];
  }
  return -0.5 * d * std::log(2.0 * std::numbers::pi * dt) - 0.5 * log_g - quad / (2.0 * dt);
}

void SystemField::evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& drift, Eigen::MatrixXd& amplitude) const {
  const int d = sys_.dim();
  if (states.cols() != d) throw DimensionError("state batch dimension differs from system dimension");
  drift.resize(states.rows(), d);
  amplitude.resize(states.rows(), d);
  Eigen::VectorXd x(d), f(d), a(d);
  for (Eigen::Index b = 0; b < states.rows(); ++b) {
    x = states.row(b).transpose();
    sys_.eval_drift_into(x, f);
    sys_.eval_amplitude_into(x, a);
    drift.row(b) = f.transpose();
    amplitude.row(b) = a.transpose();
  }
}

PathBundle simulate_field(const VectorField& field, const Eigen::MatrixXd& initial_states,
                          const std::vector<double>& observation_times, int substeps, const RandomStream& rng,
                          double bound) {
  const int d = field.dim();
  if (initial_states.cols() != d) throw DimensionError("initial states dimension differs from field dimension");
  if (substeps < 1) throw ConfigError("substeps must be positive");
  if (observation_times.empty()) throw ConfigError("observation grid is empty");
  for (std::size_t k = 1; k < observation_times.size(); ++k) {
    if (!(observation_times[k] > observation_times[k - 1])) {
      throw DataError("observation times must be strictly increasing");
    }
  }
  const Eigen::Index paths = initial_states.rows();
  const int length = static_cast<int>(observation_times.size());

  PathBundle bundle;
  bundle.dim = d;
  bundle.paths.resize(paths);
  bundle.divergence.assign(paths, Divergence::None);
  std::vector<RandomStream> noise;
  noise.reserve(paths);
  for (Eigen::Index k = 0; k < paths; ++k) noise.push_back(rng.split(k));

  Eigen::MatrixXd x = initial_states;
  for (Eigen::Index k = 0; k < paths; ++k) {
    bundle.paths[k].times = observation_times;
    bundle.paths[k].states.resize(length, d);
    bundle.paths[k].states.row(0) = x.row(k);
    bundle.divergence[k] = classify(x.row(k).transpose(), bound);
  }

  Eigen::MatrixXd drift, amp;
  Eigen::VectorXd xk(d), fk(d), ak(d), eps(d);
  for (int obs = 1; obs < length; ++obs) {
    const double h = (observation_times[obs] - observation_times[obs - 1]) / substeps;
    const double sqrt_h = std::sqrt(h);
    for (int s = 0; s < substeps; ++s) {
      field.evaluate(x, drift, amp);
      for (Eigen::Index k = 0; k < paths; ++k) {
        for (int i = 0; i < d; ++i) eps[i] = noise[k].normal();
        if (bundle.divergence[k] != Divergence::None) continue;
        xk = x.row(k).transpose();
        fk = drift.row(k).transpose();
        ak = amp.row(k).transpose();
        em_update(xk, fk, ak, h, sqrt_h, eps);
        const Divergence status = classify(xk, bound);
        if (status != Divergence::None) {
          bundle.divergence[k] = status;
        } else {
          x.row(k) = xk.transpose();
        }
      }
    }
    for (Eigen::Index k = 0; k < paths; ++k) bundle.paths[k].states.row(obs) = x.row(k);
  }
  return bundle;
}

}  // namespace sdefim
