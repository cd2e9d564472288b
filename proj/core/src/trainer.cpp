#include "sdefim/trainer.hpp"

#include <cmath>

#include "sdefim/error.hpp"
#include "sdefim/parallel.hpp"

namespace sdefim {

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  if (context_min < 2 || context_max < context_min) throw ConfigError("context range must satisfy 2 <= min <= max");
  if (locations < 1) throw ConfigError("locations per equation must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint interval must be >= 0");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"lr", cfg.lr},
          {"weight_decay", cfg.weight_decay},
          {"batch", cfg.batch},
          {"context_min", cfg.context_min},
          {"context_max", cfg.context_max},
          {"locations", cfg.locations},
          {"steps", cfg.steps},
          {"seed", cfg.seed},
          {"checkpoint_every", cfg.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  try {
    cfg.lr = j.value("lr", cfg.lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.batch = j.value("batch", cfg.batch);
    cfg.context_min = j.value("context_min", cfg.context_min);
    cfg.context_max = j.value("context_max", cfg.context_max);
    cfg.locations = j.value("locations", cfg.locations);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainState initial_state(const ModelConfig& model, std::uint64_t seed) {
  TrainState st;
  st.params = initialize_parameters(model, seed);
  st.optimizer = AdamWState::zeros(st.params.count());
  return st;
}

RecordSample draw_record_sample(const EquationRecord& record, int context_min, int context_max, int locations,
                                RandomStream& rng) {
  const ObservationSet all = to_observation_set(record.observed).set;
  if (all.empty()) throw DataError("equation record has no transitions");
  const auto n = rng.uniform_int(context_min, context_max);
  RecordSample s;
  auto [normalized, rec] = fit_and_normalize(subsample(all, n, rng));
  s.normalized = std::move(normalized);
  s.normalization = std::move(rec);
  s.locations = sample_locations(s.normalized, locations, rng);
  s.targets = normalized_targets(record.system, s.locations, s.normalization);
  return s;
}

RecordLoss record_loss(const ModelConfig& model, const ParameterSet& params, const RecordSample& sample,
                       bool with_grad, const LossOptions& options) {
  ad::Tape tape(with_grad);
  Network net(model, params, tape, with_grad, options.dropout);
  const ad::Var context = net.encode(net.embed(sample.normalized));
  const auto ctx = net.prepare_all(context, options.frozen_uncertainty_context);
  const ad::Var x = tape.constant(net.pad(sample.locations));
  const HeadOutputs out = net.heads(ctx, x);
  const PretrainingLoss loss = pretraining_loss(out.drift, out.amplitude, out.uncertainty, sample.targets);
  RecordLoss r;
  r.weighted = loss.weighted.value()(0, 0);
  r.l1 = loss.l1;
  r.mean_u = loss.mean_u;
  if (with_grad) {
    tape.backward(loss.weighted);
    r.grad.resize(params.count());
    for (int i = 0; i < static_cast<int>(params.blocks().size()); ++i) {
      const auto& b = params.blocks()[i];
      const Eigen::MatrixXd g = tape.grad(net.param(i));
      r.grad.segment(b.offset, b.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    }
  }
  return r;
}

Eigen::MatrixXd encoded_context(const ModelConfig& model, const ParameterSet& params, const ObservationSet& normalized) {
  ad::Tape tape(false);
  Network net(model, params, tape, false);
  return net.encode(net.embed(normalized)).value();
}

LossReport train_step(const ModelConfig& model, const TrainConfig& cfg, TrainState& state,
                      const std::vector<EquationRecord>& records) {
  if (records.empty()) throw DataError("training needs at least one record");
  RandomStream step_rng(cfg.seed, {0x57e9, static_cast<std::uint64_t>(state.step)});
  std::vector<std::size_t> picks(static_cast<std::size_t>(cfg.batch));
  for (auto& p : picks) p = static_cast<std::size_t>(step_rng.uniform_int(0, static_cast<std::int64_t>(records.size()) - 1));

  std::vector<RecordLoss> losses(picks.size());
  parallel_for(picks.size(), [&](std::size_t b) {
    RandomStream rng = step_rng.split(b + 1);
    RandomStream drop = rng.split(0xd0);
    const RecordSample sample =
        draw_record_sample(records[picks[b]], cfg.context_min, cfg.context_max, cfg.locations, rng);
    LossOptions opts;
    opts.dropout = &drop;
    losses[b] = record_loss(model, state.params, sample, true, opts);
  });

  LossReport report;
  report.step = state.step;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.params.count());
  const double inv = 1.0 / static_cast<double>(picks.size());
  for (const auto& l : losses) {
    grad += inv * l.grad;
    report.l1 += inv * l.l1;
    report.weighted += inv * l.weighted;
    report.mean_u += inv * l.mean_u;
  }
  report.grad_norm = grad.norm();
  if (!std::isfinite(report.weighted) || !std::isfinite(report.grad_norm)) {
    report.skipped = true;
  } else {
    adamw_update(state.params.flat(), grad, state.optimizer, cfg.optimizer());
  }
  state.step += 1;
  return report;
}

double validation_l1(const ModelConfig& model, const ParameterSet& params, const std::vector<EquationRecord>& records,
                     int context_size, int locations, std::uint64_t seed) {
  if (records.empty()) throw DataError("validation needs at least one record");
  std::vector<double> l1(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    RandomStream rng(seed, {0x7a11d, i});
    const RecordSample s = draw_record_sample(records[i], context_size, context_size, locations, rng);
    l1[i] = record_loss(model, params, s, false).l1;
  });
  double total = 0.0;
  for (double v : l1) total += v;
  return total / static_cast<double>(records.size());
}

}  // namespace sdefim
