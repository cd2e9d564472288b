#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "sdefim/model.hpp"
#include "sdefim/observations.hpp"

namespace sdefim {

inline constexpr double kDiffusionFloor = 1e-8;

enum class FinetuneMode { Dense, Sparse };

struct FinetuneConfig {
  FinetuneMode mode = FinetuneMode::Dense;
  int iters = 100;
  double lr = 1e-4;
  double weight_decay = 0.0;
  int batch = 256;          // transitions per gradient step
  int context_cap = 1024;   // transitions fed to the encoder
  int eval_size = 512;      // fixed transitions behind the reported objective
  int substeps = 5;         // sparse mode only
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const FinetuneConfig& cfg);
FinetuneConfig finetune_config_from_json(const nlohmann::json& j);

/// Short-time Gaussian negative log-likelihood summed over transitions and
/// components: (dy - f dt)^2 / (2 g dt) + ln(g) / 2 with g floored at
/// kDiffusionFloor. `floored` counts entries that hit the floor.
double dense_objective(const Eigen::MatrixXd& drift, const Eigen::MatrixXd& amplitude, const Eigen::MatrixXd& dy,
                       const Eigen::VectorXd& dtau, std::int64_t* floored = nullptr);

struct FinetuneResult {
  /// Mean per-transition objective on the fixed evaluation subset, taken
  /// before each update (length = iters).
  std::vector<double> trace;
  double final_objective = 0.0;
  std::int64_t floored = 0;
};

/// Updates `params` in place. The context is a fixed capped subset of
/// `series`; gradient steps use fresh random transition batches.
FinetuneResult finetune(const ModelConfig& model, ParameterSet& params, const ObservationSet& series,
                        const FinetuneConfig& cfg);

inline FinetuneResult finetune_dense(const ModelConfig& model, ParameterSet& params, const ObservationSet& series,
                                     FinetuneConfig cfg) {
  cfg.mode = FinetuneMode::Dense;
  return finetune(model, params, series, cfg);
}

inline FinetuneResult finetune_sparse(const ModelConfig& model, ParameterSet& params, const ObservationSet& series,
                                      FinetuneConfig cfg) {
  cfg.mode = FinetuneMode::Sparse;
  return finetune(model, params, series, cfg);
}

/// Context subset used by finetune for this config (the model's view).
ObservationSet finetune_context(const ObservationSet& series, const FinetuneConfig& cfg);

}  // namespace sdefim
