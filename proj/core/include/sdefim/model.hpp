#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "sdefim/autodiff.hpp"
#include "sdefim/normalization.hpp"
#include "sdefim/observations.hpp"
#include "sdefim/random.hpp"
#include "sdefim/simulation.hpp"

namespace sdefim {

enum class AttentionKind { Linear, Softmax };

struct ModelConfig {
  int hidden = 64;          // n, divisible by 4 and by heads
  int encoder_layers = 2;
  int trunk_depth = 4;      // M blocks per branch
  int d_max = 3;
  int heads = 4;
  double dropout = 0.1;
  AttentionKind attention = AttentionKind::Linear;
  int ff_multiplier = 4;
  /// The uncertainty branch reads a gradient-blocked copy of the context.
  bool detach_uncertainty = true;
  double norm_eps = 1e-5;
  double target_gap = kDefaultTargetGap;

  int ff_width() const noexcept { return hidden * ff_multiplier; }
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class Branch : int { Drift = 0, Diffusion = 1, Uncertainty = 2 };

struct ParameterBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;
  Eigen::Index size() const noexcept { return rows * cols; }
};

/// All weights in one flat vector plus a named-offset table.
class ParameterSet {
 public:
  ParameterSet() = default;
  /// Layout implied by the config; values zero.
  explicit ParameterSet(const ModelConfig& cfg);

  const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }
  const ParameterBlock& block(const std::string& name) const;
  int index(const std::string& name) const;
  Eigen::Index count() const noexcept { return flat_.size(); }

  Eigen::VectorXd& flat() noexcept { return flat_; }
  const Eigen::VectorXd& flat() const noexcept { return flat_; }
  Eigen::MatrixXd matrix(int block_index) const;
  void set_matrix(int block_index, const Eigen::MatrixXd& value);

  bool operator==(const ParameterSet& other) const;

  /// Used when reading a checkpoint.
  static ParameterSet from_layout(std::vector<ParameterBlock> blocks, Eigen::VectorXd flat);

 private:
  void add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  std::vector<ParameterBlock> blocks_;
  std::map<std::string, int> by_name_;
  Eigen::VectorXd flat_;
};

/// Scaled normal weights (std 1/sqrt(fan_in)), zero biases, unit norm gains.
ParameterSet initialize_parameters(const ModelConfig& cfg, std::uint64_t seed);
Eigen::Index parameter_count(const ModelConfig& cfg);

/// Per-block attention summaries of an encoded context, reused across queries.
struct BranchContext {
  struct Block {
    std::vector<ad::Var> kv;      // linear: phi(K)^T V per head; softmax: K per head
    std::vector<ad::Var> ksum;    // linear: column sums of phi(K); softmax: V per head
  };
  std::vector<Block> blocks;
};

/// Raw head outputs at Q normalized locations (Q x d_max each; U is Q x 1).
struct HeadOutputs {
  ad::Var drift;
  ad::Var amplitude;
  ad::Var uncertainty;
};

/// Forward pass of the recognition network on one tape.
class Network {
 public:
  /// With `trainable` the parameters become tape leaves. `dropout_rng`
  /// enables dropout; pass nullptr for deterministic evaluation.
  Network(const ModelConfig& cfg, const ParameterSet& params, ad::Tape& tape, bool trainable,
          RandomStream* dropout_rng = nullptr);

  const ModelConfig& config() const noexcept { return cfg_; }
  ad::Tape& tape() noexcept { return tape_; }
  ad::Var param(int block_index) const { return vars_[block_index]; }
  const std::vector<ad::Var>& params() const noexcept { return vars_; }

  /// Tuple embeddings, N x n. Input must already be normalized.
  ad::Var embed(const ObservationSet& normalized);
  /// Self-attention encoder, N x n.
  ad::Var encode(ad::Var embedded);
  BranchContext prepare(Branch branch, ad::Var context);
  /// locations: Q x d_max constant or differentiable (sparse finetuning).
  ad::Var query(Branch branch, const BranchContext& ctx, ad::Var locations);

  /// Context for each branch from an encoded context, honoring
  /// detach_uncertainty. `frozen_uncertainty_context` substitutes a fixed
  /// matrix for the uncertainty branch (gradient checking).
  std::array<BranchContext, 3> prepare_all(ad::Var context,
                                           const std::optional<Eigen::MatrixXd>& frozen_uncertainty_context = {});
  HeadOutputs heads(const std::array<BranchContext, 3>& ctx, ad::Var locations);

  /// Pads an N x d matrix with zero columns up to d_max.
  Eigen::MatrixXd pad(const Eigen::MatrixXd& x) const;

 private:
  ad::Var p(const std::string& name) const;
  ad::Var linear(ad::Var x, const std::string& prefix) const;
  ad::Var dropout(ad::Var x);
  ad::Var norm(ad::Var x, const std::string& prefix) const;
  ad::Var feed_forward(ad::Var x, const std::string& prefix);
  ad::Var attention(ad::Var q_in, ad::Var kv_in, const std::string& prefix);
  ad::Var attend(ad::Var queries, const BranchContext::Block& block, const std::string& prefix);

  ModelConfig cfg_;
  const ParameterSet& params_;
  ad::Tape& tape_;
  std::vector<ad::Var> vars_;
  RandomStream* dropout_rng_;
};

struct VectorFieldEstimate {
  Eigen::MatrixXd locations;    // Q x d, original domain
  Eigen::MatrixXd drift;        // Q x d
  Eigen::MatrixXd amplitude;    // Q x d, sqrt(g) >= 0
  Eigen::VectorXd uncertainty;  // Q
  NormalizationRecord normalization;
};

/// Encodes a context once and answers repeated field queries. Keeps a
/// reference to `params`; not safe for concurrent use.
class InferenceSession final : public VectorField {
 public:
  InferenceSession(const ModelConfig& cfg, const ParameterSet& params, const ObservationSet& raw_context);

  int dim() const override { return dim_; }
  /// Original-domain drift and amplitude at B x d states.
  void evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& drift, Eigen::MatrixXd& amplitude) const override;
  VectorFieldEstimate estimate(const Eigen::MatrixXd& locations) const;
  const NormalizationRecord& normalization() const noexcept { return norm_; }

 private:
  ModelConfig cfg_;
  const ParameterSet& params_;
  int dim_;
  NormalizationRecord norm_;
  std::unique_ptr<ad::Tape> tape_;
  std::unique_ptr<Network> net_;
  std::array<BranchContext, 3> ctx_;
  std::size_t mark_ = 0;
};

/// Full zero-shot pipeline: normalize, encode, query, renormalize.
VectorFieldEstimate infer(const ModelConfig& cfg, const ParameterSet& params, const ObservationSet& raw_context,
                          const Eigen::MatrixXd& locations);

nlohmann::json to_json(const VectorFieldEstimate& est);

}  // namespace sdefim
