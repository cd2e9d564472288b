#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "sdefim/random.hpp"
#include "sdefim/sde_system.hpp"

namespace sdefim {

struct SimulationGrid {
  double dt = 0.002;
  int n_fine_steps = 1;

  double horizon() const noexcept { return dt * n_fine_steps; }
  void validate() const;
};

enum class Divergence : std::uint8_t { None = 0, NonFinite = 1, Threshold = 2 };

/// One observed trajectory: times[k] and states.row(k).
struct Path {
  std::vector<double> times;
  Eigen::MatrixXd states;  // L x d

  int length() const noexcept { return static_cast<int>(times.size()); }
  bool operator==(const Path& other) const;
};

/// K paths of one d-dimensional process. `divergence[k]` flags path k.
struct PathBundle {
  int dim = 0;
  std::vector<Path> paths;
  std::vector<Divergence> divergence;

  int path_count() const noexcept { return static_cast<int>(paths.size()); }
  std::size_t observation_count() const noexcept;
  bool any_diverged() const noexcept;
  /// First divergence reason found, in path order.
  Divergence first_divergence() const noexcept;
  bool operator==(const PathBundle& other) const;
};

struct SimulationOptions {
  /// Record every `record_stride`-th fine state (1 records all of them).
  int record_stride = 1;
  /// A path is flagged Threshold once any |component| exceeds this bound.
  double bound = std::numeric_limits<double>::infinity();
  /// Stop the whole simulation at the first flagged path (rejection sampling).
  bool stop_on_divergence = false;
};

/// x' = x + f(x) dt + sqrt(g(x)) * eps * sqrt(dt), elementwise.
Eigen::VectorXd em_step(const SdeSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& x, double dt,
                        const Eigen::Ref<const Eigen::VectorXd>& eps);

/// Euler-Maruyama simulation from each initial state. Path k draws its noise
/// from `rng.split(k)`, so results are reproducible per seed and path index.
PathBundle simulate(const SdeSystem& sys, const SimulationGrid& grid, const std::vector<Eigen::VectorXd>& initial_states,
                    const RandomStream& rng, const SimulationOptions& options = {});

/// Gaussian short-time transition log-density log p(x' | x, dt).
/// Throws DegenerateDiffusionError if some g_i(x) == 0.
double transition_logdensity(const SdeSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& x_next, double dt);

/// Batched drift/amplitude evaluator; lets the same simulator drive both
/// ground-truth systems and learned estimates.
class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual int dim() const = 0;
  /// states: B x d. Writes B x d drift and amplitude (sqrt g) matrices.
  virtual void evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& drift, Eigen::MatrixXd& amplitude) const = 0;
};

class SystemField final : public VectorField {
 public:
  explicit SystemField(const SdeSystem& sys) : sys_(sys) {}
  int dim() const override { return sys_.dim(); }
  void evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& drift, Eigen::MatrixXd& amplitude) const override;

 private:
  const SdeSystem& sys_;
};

/// Simulates all paths in lockstep on an observation grid, taking `substeps`
/// EM steps of size (t_{k+1} - t_k)/substeps per observation gap. Path k uses
/// `rng.split(k)`, matching `simulate` draw for draw. A path that leaves
/// the finite range or exceeds `bound` is flagged and frozen at its last
/// admissible state.
PathBundle simulate_field(const VectorField& field, const Eigen::MatrixXd& initial_states,
                          const std::vector<double>& observation_times, int substeps, const RandomStream& rng,
                          double bound = std::numeric_limits<double>::infinity());

}  // namespace sdefim
