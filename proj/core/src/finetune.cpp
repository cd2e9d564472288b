#include "sdefim/finetune.hpp"

#include <algorithm>
#include <cmath>

#include "sdefim/error.hpp"
#include "sdefim/optimizer.hpp"

namespace sdefim {

using ad::Matrix;
using ad::Var;

void FinetuneConfig::validate() const {
  if (iters < 0) throw ConfigError("finetuning iterations must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("finetuning learning rate must be >= 0");
  if (batch < 1 || context_cap < 1 || eval_size < 1) throw ConfigError("finetuning sizes must be >= 1");
  if (substeps < 1) throw ConfigError("substeps must be >= 1");
}

nlohmann::json to_json(const FinetuneConfig& cfg) {
  return {{"mode", cfg.mode == FinetuneMode::Dense ? "dense" : "sparse"},
          {"iters", cfg.iters},
          {"lr", cfg.lr},
          {"weight_decay", cfg.weight_decay},
          {"batch", cfg.batch},
          {"context_cap", cfg.context_cap},
          {"eval_size", cfg.eval_size},
          {"substeps", cfg.substeps},
          {"seed", cfg.seed}};
}

FinetuneConfig finetune_config_from_json(const nlohmann::json& j) {
  FinetuneConfig cfg;
  try {
    const std::string mode = j.value("mode", std::string("dense"));
    if (mode == "dense") {
      cfg.mode = FinetuneMode::Dense;
    } else if (mode == "sparse") {
      cfg.mode = FinetuneMode::Sparse;
    } else {
      throw ConfigError("unknown finetuning mode '" + mode + "'");
    }
    cfg.iters = j.value("iters", cfg.iters);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.batch = j.value("batch", cfg.batch);
    cfg.context_cap = j.value("context_cap", cfg.context_cap);
    cfg.eval_size = j.value("eval_size", cfg.eval_size);
    cfg.substeps = j.value("substeps", cfg.substeps);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad finetune config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

double dense_objective(const Eigen::MatrixXd& drift, const Eigen::MatrixXd& amplitude, const Eigen::MatrixXd& dy,
                       const Eigen::VectorXd& dtau, std::int64_t* floored) {
  if (drift.rows() != dy.rows() || amplitude.rows() != dy.rows() || dtau.size() != dy.rows() ||
      drift.cols() != dy.cols() || amplitude.cols() != dy.cols()) {
    throw DimensionError("dense objective: shapes disagree");
  }
  double total = 0.0;
  for (Eigen::Index l = 0; l < dy.rows(); ++l) {
    for (Eigen::Index i = 0; i < dy.cols(); ++i) {
      double g = amplitude(l, i) * amplitude(l, i);
      if (g < kDiffusionFloor) {
        g = kDiffusionFloor;
        if (floored != nullptr) ++*floored;
      }
      const double r = dy(l, i) - drift(l, i) * dtau[l];
      total += r * r / (2.0 * g * dtau[l]) + 0.5 * std::log(g);
    }
  }
  return total;
}

namespace {

std::vector<Eigen::Index> pick_rows(Eigen::Index n, Eigen::Index count, RandomStream& rng) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) rows[i] = i;
  if (count >= n) return rows;
  for (Eigen::Index i = 0; i < count; ++i) std::swap(rows[i], rows[rng.uniform_int(i, n - 1)]);
  rows.resize(static_cast<std::size_t>(count));
  return rows;
}

struct Objective {
  Var value;  // mean per transition
  std::int64_t floored = 0;
};

class FieldOnTape {
 public:
  FieldOnTape(Network& net, const ObservationSet& normalized_context, const NormalizationRecord& rec)
      : net_(net), d_(rec.dim()) {
    const Var context = net.encode(net.embed(normalized_context));
    drift_ctx_ = net.prepare(Branch::Drift, context);
    diff_ctx_ = net.prepare(Branch::Diffusion, context);
    ad::Tape& t = net.tape();
    neg_mean_ = t.constant(-rec.mean.transpose());
    inv_scale_ = t.constant(rec.scale.cwiseInverse().transpose());
    drift_scale_ = t.constant((rec.time_factor * rec.scale).transpose());
    amp_scale_ = t.constant((std::sqrt(rec.time_factor) * rec.scale).transpose());
  }

  /// Original-domain drift and amplitude at B x d states.
  std::pair<Var, Var> operator()(Var states) {
    ad::Tape& t = net_.tape();
    Var x = ad::mul_row(ad::add_row(states, neg_mean_), inv_scale_);
    const int d_max = net_.config().d_max;
    if (d_ < d_max) {
      const std::vector<Var> parts = {x, t.constant(Matrix::Zero(states.rows(), d_max - d_))};
      x = ad::concat_cols(parts);
    }
    const Var f = ad::mul_row(ad::slice_cols(net_.query(Branch::Drift, drift_ctx_, x), 0, d_), drift_scale_);
    const Var a = ad::mul_row(ad::slice_cols(net_.query(Branch::Diffusion, diff_ctx_, x), 0, d_), amp_scale_);
    return {f, a};
  }

 private:
  Network& net_;
  int d_;
  BranchContext drift_ctx_;
  BranchContext diff_ctx_;
  Var neg_mean_, inv_scale_, drift_scale_, amp_scale_;
};

Objective dense_loss(FieldOnTape& field, ad::Tape& t, const ObservationSet& batch) {
  const auto [f, a] = field(t.constant(batch.y));
  Objective out;
  const Matrix g_raw = a.value().cwiseAbs2();
  out.floored = (g_raw.array() < kDiffusionFloor).count();
  const Var g = ad::max_scalar(ad::square(a), kDiffusionFloor);
  const Var log_g = ad::log(g);
  const Var resid = ad::sub(t.constant(batch.dy), ad::mul_col(f, t.constant(batch.dtau)));
  const Matrix half_inv_dt = (0.5 / batch.dtau.array()).matrix();
  const Var quad = ad::mul_col(ad::mul(ad::square(resid), ad::exp(ad::scale(log_g, -1.0))), t.constant(half_inv_dt));
  const Var total = ad::sum(ad::add(quad, ad::scale(log_g, 0.5)));
  out.value = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
  return out;
}

Objective sparse_loss(FieldOnTape& field, ad::Tape& t, const ObservationSet& batch, int substeps, RandomStream& noise) {
  const Eigen::VectorXd h = batch.dtau / static_cast<double>(substeps);
  const Var h_col = t.constant(h);
  const Var sqrt_h_col = t.constant(h.cwiseSqrt());
  Var x = t.constant(batch.y);
  for (int s = 0; s < substeps; ++s) {
    const auto [f, a] = field(x);
    Matrix eps(batch.size(), batch.dim);
    for (Eigen::Index r = 0; r < eps.rows(); ++r) {
      for (Eigen::Index c = 0; c < eps.cols(); ++c) eps(r, c) = noise.normal();
    }
    x = ad::add(ad::add(x, ad::mul_col(f, h_col)), ad::mul(ad::mul_col(a, sqrt_h_col), t.constant(eps)));
  }
  const Var err = ad::sub(x, t.constant(batch.y + batch.dy));
  Objective out;
  out.value = ad::scale(ad::sum(ad::square(err)), 1.0 / static_cast<double>(batch.size()));
  return out;
}

Objective objective(const FinetuneConfig& cfg, FieldOnTape& field, ad::Tape& t, const ObservationSet& batch,
                    RandomStream& noise) {
  return cfg.mode == FinetuneMode::Dense ? dense_loss(field, t, batch)
                                         : sparse_loss(field, t, batch, cfg.substeps, noise);
}

}  // namespace

ObservationSet finetune_context(const ObservationSet& series, const FinetuneConfig& cfg) {
  RandomStream rng(cfg.seed, {0xc07e});
  auto rows = pick_rows(series.size(), cfg.context_cap, rng);
  std::sort(rows.begin(), rows.end());
  return series.select(rows);
}

FinetuneResult finetune(const ModelConfig& model, ParameterSet& params, const ObservationSet& series,
                        const FinetuneConfig& cfg) {
  cfg.validate();
  if (series.empty()) throw DataError("finetuning needs a non-empty series");
  if (series.dim > model.d_max) throw DimensionError("series dimension exceeds model d_max");
  const auto [normalized, rec] = fit_and_normalize(finetune_context(series, cfg), model.target_gap);

  RandomStream eval_pick(cfg.seed, {0xe7a1});
  auto eval_rows = pick_rows(series.size(), cfg.eval_size, eval_pick);
  std::sort(eval_rows.begin(), eval_rows.end());
  const ObservationSet eval_set = series.select(eval_rows);

  FinetuneResult result;
  auto evaluate = [&]() {
    ad::Tape t(false);
    Network net(model, params, t, false);
    FieldOnTape field(net, normalized, rec);
    RandomStream noise(cfg.seed, {0xe7a1, 1});
    const Objective o = objective(cfg, field, t, eval_set, noise);
    result.floored += o.floored;
    return o.value.value()(0, 0);
  };

  AdamWState opt = AdamWState::zeros(params.count());
  const AdamWConfig adam{cfg.lr, cfg.weight_decay};
  for (int it = 0; it < cfg.iters; ++it) {
    result.trace.push_back(evaluate());
    RandomStream rng(cfg.seed, {0xf17e, static_cast<std::uint64_t>(it)});
    const ObservationSet batch = series.select(pick_rows(series.size(), cfg.batch, rng));
    ad::Tape t(true);
    Network net(model, params, t, true);
    FieldOnTape field(net, normalized, rec);
    RandomStream noise = rng.split(1);
    const Objective o = objective(cfg, field, t, batch, noise);
    result.floored += o.floored;
    if (!std::isfinite(o.value.value()(0, 0))) throw NumericError("finetuning objective became non-finite");
    t.backward(o.value);
    Eigen::VectorXd grad(params.count());
    for (int i = 0; i < static_cast<int>(params.blocks().size()); ++i) {
      const auto& b = params.blocks()[i];
      const Matrix g = t.grad(net.param(i));
      grad.segment(b.offset, b.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    }
    if (!grad.allFinite()) throw NumericError("finetuning gradient became non-finite");
    adamw_update(params.flat(), grad, opt, adam);
  }
  result.final_objective = evaluate();
  return result;
}

}  // namespace sdefim
