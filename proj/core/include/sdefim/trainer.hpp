#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "sdefim/losses.hpp"
#include "sdefim/model.hpp"
#include "sdefim/optimizer.hpp"
#include "sdefim/prior.hpp"

namespace sdefim {

struct TrainConfig {
  double lr = 1e-5;
  double weight_decay = 1e-4;
  int batch = 16;
  int context_min = 64;    // N ~ U{context_min..context_max}
  int context_max = 1024;
  int locations = 32;      // Q
  std::int64_t steps = 1000;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only

  AdamWConfig optimizer() const { return {lr, weight_decay}; }
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LossReport {
  std::int64_t step = 0;
  double l1 = 0.0;
  double weighted = 0.0;
  double mean_u = 0.0;
  double grad_norm = 0.0;
  bool skipped = false;
};

struct TrainState {
  ParameterSet params;
  AdamWState optimizer;
  std::int64_t step = 0;
};

TrainState initial_state(const ModelConfig& model, std::uint64_t seed);

/// Everything random about one record's contribution to a step.
struct RecordSample {
  ObservationSet normalized;
  NormalizationRecord normalization;
  Eigen::MatrixXd locations;  // Q x d, normalized
  FieldTargets targets;
};

/// Context size, tuple subset, normalization, locations and targets.
RecordSample draw_record_sample(const EquationRecord& record, int context_min, int context_max, int locations,
                                RandomStream& rng);

struct LossOptions {
  /// Enables dropout when set.
  RandomStream* dropout = nullptr;
  /// Replaces the uncertainty branch's context by a constant.
  std::optional<Eigen::MatrixXd> frozen_uncertainty_context;
};

struct RecordLoss {
  double weighted = 0.0;
  double l1 = 0.0;
  double mean_u = 0.0;
  Eigen::VectorXd grad;  // flat, empty unless requested
};

RecordLoss record_loss(const ModelConfig& model, const ParameterSet& params, const RecordSample& sample,
                       bool with_grad, const LossOptions& options = {});

/// Encoded context value (N x n) without dropout.
Eigen::MatrixXd encoded_context(const ModelConfig& model, const ParameterSet& params, const ObservationSet& normalized);

/// One AdamW step on a batch drawn from `records` with streams keyed by
/// (seed, step). A non-finite loss leaves the state untouched except for
/// the step counter and is flagged in the report.
LossReport train_step(const ModelConfig& model, const TrainConfig& cfg, TrainState& state,
                      const std::vector<EquationRecord>& records);

/// Mean unweighted loss over records with dropout off and sampling keyed by
/// `seed`, so repeated calls compare like with like.
double validation_l1(const ModelConfig& model, const ParameterSet& params, const std::vector<EquationRecord>& records,
                     int context_size, int locations, std::uint64_t seed);

}  // namespace sdefim
