// Acceptance suite. Usage: sdefim_acceptance [criterion numbers...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "sdefim/binary_io.hpp"
#include "sdefim/catalog.hpp"
#include "sdefim/dataset.hpp"
#include "sdefim/finetune.hpp"
#include "sdefim/losses.hpp"
#include "sdefim/metrics.hpp"
#include "sdefim/model.hpp"
#include "sdefim/normalization.hpp"
#include "sdefim/prior.hpp"
#include "sdefim/signature.hpp"
#include "sdefim/simulation.hpp"
#include "sdefim/trainer.hpp"

#ifndef SDEFIM_CLI_PATH
#define SDEFIM_CLI_PATH "sdefim"
#endif

using namespace sdefim;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Polynomial affine1(double a, double b) {
  Polynomial p(1);
  p.add_term(MultiIndex{{1}}, a);
  p.add_term(MultiIndex{{0}}, b);
  return p;
}

SdeSystem ou(double k, double g) { return SdeSystem({affine1(-k, 0.0)}, {Polynomial::constant(1, g)}); }

// 1. Rejection rates of the prior.
Outcome rejection_rates() {
  const PriorConfig prior;
  const double target[3] = {0.50, 0.78, 0.92};
  Outcome o{true, ""};
  for (int d = 1; d <= 3; ++d) {
    const RejectionStats st = measure_rejection(d, 2000, prior, 100 + d);
    const bool ok = std::abs(st.rate() - target[d - 1]) <= 0.08;
    o.pass = o.pass && ok;
    o.detail += fmt("%dD %.3f (target %.2f +- 0.08, n=%lld) ", d, st.rate(), target[d - 1],
                    static_cast<long long>(st.candidates));
  }
  return o;
}

// 2. Euler-Maruyama moments of dx = -x dt + dW.
Outcome em_oracle() {
  const int n = 10000;
  const std::vector<Eigen::VectorXd> x0(n, Eigen::VectorXd::Ones(1));
  SimulationOptions opt;
  opt.record_stride = 500;
  const PathBundle b = simulate(ou(1.0, 1.0), {0.002, 500}, x0, RandomStream(2024), opt);
  Eigen::VectorXd xt(n);
  for (int k = 0; k < n; ++k) xt[k] = b.paths[k].states(b.paths[k].length() - 1, 0);
  const double mean = xt.mean();
  const Eigen::ArrayXd c = xt.array() - mean;
  const double var = c.square().sum() / (n - 1);
  const double m4 = c.pow(4).mean();
  const double se_mean = std::sqrt(var / n);
  const double se_var = std::sqrt((m4 - var * var) / n);
  const double mu = std::exp(-1.0), s2 = (1.0 - std::exp(-2.0)) / 2.0;
  const double zm = (mean - mu) / se_mean, zv = (var - s2) / se_var;
  const bool last_time_ok = std::abs(b.paths[0].times.back() - 1.0) < 1e-12;
  return {last_time_ok && std::abs(zm) <= 3.0 && std::abs(zv) <= 3.0,
          fmt("mean %.5f vs %.5f (z=%.2f), var %.5f vs %.5f (z=%.2f)", mean, mu, zm, var, s2, zv)};
}

// Original system seen through a normalization record: the drift and
// amplitude a model would have to learn in the normalized domain.
class NormalizedField final : public VectorField {
 public:
  NormalizedField(const SdeSystem& sys, NormalizationRecord rec) : sys_(sys), rec_(std::move(rec)) {}
  int dim() const override { return sys_.dim(); }
  void evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& drift, Eigen::MatrixXd& amplitude) const override {
    drift.resize(states.rows(), dim());
    amplitude.resize(states.rows(), dim());
    for (Eigen::Index r = 0; r < states.rows(); ++r) {
      const Eigen::VectorXd x = denormalize_location(states.row(r).transpose(), rec_);
      Eigen::VectorXd f(dim()), a(dim());
      sys_.eval_drift_into(x, f);
      sys_.eval_amplitude_into(x, a);
      const FieldValues v = normalize_fields(f, a, rec_);
      drift.row(r) = v.drift.transpose();
      amplitude.row(r) = v.amplitude.transpose();
    }
  }

 private:
  const SdeSystem& sys_;
  NormalizationRecord rec_;
};

// 3. normalize -> simulate -> unnormalize equals direct simulation.
Outcome affine_exactness() {
  RandomStream rng(33);
  const PriorConfig prior;
  const double dt = 0.002;
  const int steps = 200;
  double worst = 0.0;
  int systems = 0, skipped = 0;
  while (systems < 100) {
    const int d = static_cast<int>(rng.uniform_int(1, 3));
    const SdeSystem sys = sample_system(d, prior, rng);
    NormalizationRecord rec;
    rec.mean = Eigen::VectorXd(d);
    rec.scale = Eigen::VectorXd(d);
    for (int i = 0; i < d; ++i) {
      rec.mean[i] = rng.normal();
      rec.scale[i] = std::exp(rng.uniform(std::log(0.2), std::log(5.0)));
    }
    rec.time_factor = std::exp(rng.uniform(std::log(0.05), std::log(20.0)));
    Eigen::MatrixXd x0(4, d);
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < d; ++i) x0(k, i) = rng.normal();
    std::vector<double> t(steps + 1), tn(steps + 1);
    for (int k = 0; k <= steps; ++k) {
      t[k] = k * dt;
      tn[k] = rec.time_factor * t[k];
    }
    const RandomStream noise = rng.split(systems + skipped);
    const PathBundle direct = simulate_field(SystemField(sys), x0, t, 1, noise, 100.0);
    if (direct.any_diverged()) {
      ++skipped;
      continue;
    }
    const PathBundle norm = simulate_field(NormalizedField(sys, rec), normalize_locations(x0, rec), tn, 1, noise);
    for (int k = 0; k < direct.path_count(); ++k) {
      const Eigen::MatrixXd back = denormalize_locations(norm.paths[k].states, rec);
      const double denom = std::max(direct.paths[k].states.cwiseAbs().maxCoeff(), 1e-300);
      worst = std::max(worst, (back - direct.paths[k].states).cwiseAbs().maxCoeff() / denom);
    }
    ++systems;
  }
  return {worst <= 1e-10, fmt("max relative error %.3e over %d systems (%d divergent skipped)", worst, systems, skipped)};
}

// 4. argmin_U exp(-U) l1 + U = ln l1.
long double golden_min(const std::function<long double(long double)>& f, long double a, long double b) {
  const long double r = (std::sqrt(5.0L) - 1.0L) / 2.0L;
  long double c = b - r * (b - a), d = a + r * (b - a);
  long double fc = f(c), fd = f(d);
  for (int i = 0; i < 200 && b - a > 1e-15L; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2.0L;
}

Outcome weighting_optimum() {
  RandomStream rng(4);
  double worst_argmin = 0.0, worst_deriv = 0.0, worst_value = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double l1 = std::exp(rng.uniform(std::log(1e-3), std::log(1e3)));
    const long double L = l1;
    const long double u_star = golden_min([L](long double u) { return std::exp(-u) * L + u; }, -20.0L, 20.0L);
    worst_argmin = std::max(worst_argmin, static_cast<double>(std::abs(u_star - std::log(L))));
    const double u = std::log(l1), h = 1e-5;
    worst_deriv = std::max(worst_deriv, std::abs((loss_weighted(l1, u + h) - loss_weighted(l1, u - h)) / (2 * h)));
    worst_value = std::max(worst_value, std::abs(loss_weighted(l1, u) - (1.0 + u)));
  }
  return {worst_argmin <= 1e-8 && worst_deriv <= 1e-8 && worst_value <= 1e-12,
          fmt("|argmin - ln l1| %.2e, library slope at ln l1 %.2e, value error %.2e", worst_argmin, worst_deriv,
              worst_value)};
}

EquationRecord ou_record(double k, double g, std::uint64_t seed, int paths, int length, int stride, double dt) {
  EquationRecord rec;
  rec.system = ou(k, g);
  std::vector<Eigen::VectorXd> x0;
  RandomStream init(seed, {1});
  for (int p = 0; p < paths; ++p) x0.push_back(Eigen::VectorXd::Constant(1, init.normal()));
  SimulationOptions opt;
  opt.record_stride = stride;
  rec.clean = simulate(rec.system, {dt, stride * (length - 1)}, x0, RandomStream(seed, {2}), opt);
  rec.observed = rec.clean;
  return rec;
}

// 5. Full-parameter gradient check on the toy configuration.
Outcome gradient_check() {
  ModelConfig model;
  model.hidden = 8;
  model.trunk_depth = 2;
  model.encoder_layers = 1;
  model.heads = 2;
  model.ff_multiplier = 2;
  const ParameterSet params = initialize_parameters(model, 5);
  const EquationRecord rec = ou_record(1.5, 0.4, 5, 1, 6, 5, 0.002);
  RandomStream rng(6);
  const RecordSample sample = draw_record_sample(rec, 5, 5, 3, rng);
  LossOptions frozen;
  frozen.frozen_uncertainty_context = encoded_context(model, params, sample.normalized);
  const Eigen::VectorXd grad = record_loss(model, params, sample, true).grad;
  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_block;
  int blocks = 0;
  for (const auto& block : params.blocks()) {
    Eigen::VectorXd fd(block.size()), an = grad.segment(block.offset, block.size());
    for (Eigen::Index k = 0; k < block.size(); ++k) {
      ParameterSet plus = params, minus = params;
      plus.flat()[block.offset + k] += h;
      minus.flat()[block.offset + k] -= h;
      fd[k] = (record_loss(model, plus, sample, false, frozen).weighted -
               record_loss(model, minus, sample, false, frozen).weighted) /
              (2 * h);
    }
    const double rel = (fd - an).norm() / std::max({fd.norm(), an.norm(), 1e-7});
    if (rel >= worst) {
      worst = rel;
      worst_block = block.name;
    }
    ++blocks;
  }
  return {worst <= 1e-4 && sample.normalized.size() == 5 && sample.locations.rows() == 3,
          fmt("%d blocks, %lld parameters, worst relative error %.2e (%s)", blocks,
              static_cast<long long>(params.count()), worst, worst_block.c_str())};
}

// 6. Inference is invariant to the order of context tuples.
Outcome permutation_invariance() {
  const ModelConfig model;
  const ParameterSet params = initialize_parameters(model, 6);
  const CatalogEntry e = canonical_system("wang-2d");
  ObservationLayout layout{0.002, 5, 1, 501};
  const ObservationSet ctx = to_observation_set(simulate_layout(e.system, e.initial, layout, RandomStream(6))).set;
  const Eigen::MatrixXd loc = EvalGrid{e.bounds, 25}.points();
  const VectorFieldEstimate base = infer(model, params, ctx, loc);
  RandomStream rng(66);
  double worst = 0.0;
  for (int p = 0; p < 20; ++p) {
    std::vector<Eigen::Index> order(ctx.size());
    std::iota(order.begin(), order.end(), 0);
    for (Eigen::Index i = static_cast<Eigen::Index>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    }
    const VectorFieldEstimate est = infer(model, params, ctx.select(order), loc);
    worst = std::max({worst, (est.drift - base.drift).cwiseAbs().maxCoeff(),
                      (est.amplitude - base.amplitude).cwiseAbs().maxCoeff()});
  }
  return {ctx.size() == 500 && worst <= 1e-12,
          fmt("%lld tuples, 20 permutations, max deviation %.2e", static_cast<long long>(ctx.size()), worst)};
}

// 7. Linear-base signature kernel of straight lines.
Outcome signature_closed_form() {
  MmdConfig cfg;
  cfg.base = BaseKernel::Linear;
  cfg.level = 5;
  RandomStream rng(7);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int d = static_cast<int>(rng.uniform_int(1, 3));
    PathStates a = PathStates::Zero(2, d), b = PathStates::Zero(2, d);
    for (int j = 0; j < d; ++j) {
      a(0, j) = rng.normal();
      b(0, j) = rng.normal();
      a(1, j) = a(0, j) + rng.normal();
      b(1, j) = b(0, j) + rng.normal();
    }
    const double uv = (a.row(1) - a.row(0)).dot(b.row(1) - b.row(0));
    double ref = 0.0, fact = 1.0;
    for (int m = 0; m <= 5; ++m) {
      if (m > 0) fact *= m;
      ref += std::pow(uv, m) / (fact * fact);
    }
    worst = std::max(worst, std::abs(signature_kernel(a, b, cfg) - ref) / std::max(1.0, std::abs(ref)));
  }
  return {worst <= 1e-10, fmt("max relative error %.2e over 50 pairs", worst)};
}

std::vector<PathStates> ou_ensemble(double k, int count, std::uint64_t seed) {
  const std::vector<Eigen::VectorXd> x0(count, Eigen::VectorXd::Ones(1));
  SimulationOptions opt;
  opt.record_stride = 10;
  const PathBundle b = simulate(ou(k, 0.5), {0.01, 200}, x0, RandomStream(seed), opt);
  return path_states(b);
}

// 8. Signature-MMD two-sample behaviour.
Outcome mmd_two_sample() {
  const MmdConfig cfg;
  const auto a = ou_ensemble(1.0, 50, 81), b = ou_ensemble(1.0, 50, 82), c = ou_ensemble(4.0, 50, 83);
  const PermutationTest same = permutation_test(a, b, cfg, 200, 8);
  const double lo = same.null_quantile(0.005), hi = same.null_quantile(0.995);
  const PermutationTest diff = permutation_test(a, c, cfg, 200, 8);
  const double ratio = diff.mmd2 / diff.null_sd();
  return {same.mmd2 >= lo && same.mmd2 <= hi && ratio >= 5.0,
          fmt("same %.3e in [%.3e, %.3e]; -x vs -4x %.3e = %.1f null sd", same.mmd2, lo, hi, diff.mmd2, ratio)};
}

std::optional<ParameterSet> g_trained;
ModelConfig g_model;

double ou_drift_mse(const ModelConfig& model, const ParameterSet& params, double* baseline) {
  const SdeSystem truth = ou(1.0, 1.0);
  const InitialCondition init{Eigen::VectorXd::Zero(1), 1.0};
  const PathBundle ctx = simulate_layout(truth, init, {0.004, 25, 10, 128}, RandomStream(909));
  const Eigen::MatrixXd loc = EvalGrid{{{-2.0, 2.0}}, 1024}.points();
  const VectorFieldEstimate est = infer(model, params, to_observation_set(ctx).set, loc);
  const Eigen::ArrayXd err = est.drift.col(0).array() + loc.col(0).array();
  *baseline = loc.col(0).array().square().mean();
  return err.square().mean();
}

// 9. Toy pretraining on 1D systems.
Outcome toy_pretraining() {
  PriorConfig prior;
  prior.dim_ratio = {1, 0, 0};
  prior.paths_override = 10;
  prior.keep_clean = false;
  const CorruptionConfig corruption;
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset train = generate_dataset(prior, corruption, 5000, 9);
  const Dataset held = generate_dataset(prior, corruption, 100, 90);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch = 8;
  cfg.context_min = 64;
  cfg.context_max = 256;
  cfg.locations = 32;
  cfg.steps = 2000;
  cfg.seed = 9;
  TrainState st = initial_state(g_model, 9);
  const double before = validation_l1(g_model, st.params, held.records, 128, 32, 99);
  double base_mse = 0.0;
  const double mse_before = ou_drift_mse(g_model, st.params, &base_mse);
  int skipped = 0;
  for (std::int64_t s = 0; s < cfg.steps; ++s) {
    const LossReport r = train_step(g_model, cfg, st, train.records);
    skipped += r.skipped ? 1 : 0;
    if (st.step % 250 == 0) std::cerr << "  [9] step " << st.step << " weighted " << r.weighted << "\n";
  }
  const double after = validation_l1(g_model, st.params, held.records, 128, 32, 99);
  const double mse_after = ou_drift_mse(g_model, st.params, &base_mse);
  g_trained = st.params;
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  return {after <= 0.5 * before && mse_after < base_mse,
          fmt("%lld params; validation %.4g -> %.4g (%.1f%%); OU drift MSE %.4g (init %.4g) vs zero-drift %.4g; "
              "%d skipped steps; %.1f min",
              static_cast<long long>(st.params.count()), before, after, 100.0 * after / before, mse_after, mse_before,
              base_mse, skipped, minutes)};
}

// 10. Dense and sparse finetuning descend; sparse improves the MMD.
Outcome finetuning_descent() {
  const ParameterSet start = g_trained ? *g_trained : initialize_parameters(g_model, 10);
  const CatalogEntry dw = canonical_system("double-well");
  const ObservationSet dense_series =
      to_observation_set(simulate_layout(dw.system, dw.initial, dw.context, RandomStream(101))).set;
  FinetuneConfig dcfg;
  dcfg.iters = 100;
  dcfg.seed = 10;
  ParameterSet dense_params = start;
  const FinetuneResult dense = finetune_dense(g_model, dense_params, dense_series, dcfg);

  const CatalogEntry lz = canonical_system("lorenz");
  const ObservationSet sparse_series =
      to_observation_set(simulate_layout(lz.system, lz.initial, lz.context, RandomStream(102))).set;
  const PathBundle reference = simulate_layout(lz.system, lz.initial, lz.reference, RandomStream(103));
  FinetuneConfig scfg;
  scfg.iters = 100;
  scfg.substeps = 5;
  scfg.seed = 11;
  ParameterSet sparse_params = start;
  ProtocolConfig pc;
  pc.substeps = 5;
  pc.seed = 12;
  const ObservationSet ctx = finetune_context(sparse_series, scfg);
  const double mmd_zero = mmd_protocol(InferenceSession(g_model, start, ctx), reference, pc).mmd2;
  const FinetuneResult sparse = finetune_sparse(g_model, sparse_params, sparse_series, scfg);
  const double mmd_tuned = mmd_protocol(InferenceSession(g_model, sparse_params, ctx), reference, pc).mmd2;

  const bool ok = !dense.trace.empty() && dense.final_objective < dense.trace.front() && !sparse.trace.empty() &&
                  sparse.final_objective < sparse.trace.front() && mmd_tuned < mmd_zero;
  return {ok, fmt("%s weights; dense %.4g -> %.4g (%lld transitions); sparse %.4g -> %.4g; MMD %.4g -> %.4g",
                  g_trained ? "pretrained" : "initial", dense.trace.empty() ? NAN : dense.trace.front(),
                  dense.final_objective, static_cast<long long>(dense_series.size()),
                  sparse.trace.empty() ? NAN : sparse.trace.front(), sparse.final_objective, mmd_zero, mmd_tuned)};
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

// 11. CLI reruns from embedded configs are byte-identical.
Outcome reproducibility() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / fmt("sdefim-accept-%d", static_cast<int>(::getpid()));
  fs::create_directories(dir);
  const std::string cli = std::string("\"") + SDEFIM_CLI_PATH + "\"";
  auto p = [&](const char* name) { return "\"" + (dir / name).string() + "\""; };
  Outcome o{true, ""};
  if (run(cli + " --seed 11 generate --count 40 --dims 1 --out " + p("a.ds")) != 0 ||
      run(cli + " generate --config " + p("a.ds") + " --out " + p("b.ds")) != 0) {
    o = {false, "generate failed"};
  } else if (read_file(dir / "a.ds") != read_file(dir / "b.ds")) {
    o = {false, "regenerated dataset differs"};
  } else if (run(cli + " --seed 12 train --data " + p("a.ds") + " --steps 4 --quiet --out " + p("m.ckpt")) != 0 ||
             run(cli + " train --config " + p("m.ckpt") + " --quiet --out " + p("n.ckpt")) != 0) {
    o = {false, "train failed"};
  } else if (read_file(dir / "m.ckpt") != read_file(dir / "n.ckpt")) {
    o = {false, "retrained checkpoint differs"};
  } else {
    o.detail = fmt("dataset %zu bytes and checkpoint %zu bytes reproduced exactly", read_file(dir / "a.ds").size(),
                   read_file(dir / "m.ckpt").size());
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"rejection rates", rejection_rates},
      {"Euler-Maruyama OU moments", em_oracle},
      {"affine exactness of normalization", affine_exactness},
      {"uncertainty-weighting optimum", weighting_optimum},
      {"gradient check", gradient_check},
      {"permutation invariance", permutation_invariance},
      {"signature kernel closed form", signature_closed_form},
      {"MMD two-sample behaviour", mmd_two_sample},
      {"toy pretraining progress", toy_pretraining},
      {"finetuning descent", finetuning_descent},
      {"CLI reproducibility", reproducibility},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << fmt(" [%.1fs]", secs) << std::endl;
    failures += o.pass ? 0 : 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
