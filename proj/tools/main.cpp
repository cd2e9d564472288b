#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "sdefim/error.hpp"

using namespace sdefim;
using namespace sdefim::cli;

namespace {

template <typename T>
void set_if(std::optional<T>& slot, CLI::Option* opt, const T& value) {
  if (opt->count() > 0) slot = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot drift and diffusion inference for SDEs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string preset = "toy";
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  app.add_option("--preset", preset, "toy or small")->check(CLI::IsMember({"toy", "small"}));
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--config", config, "JSON config, dataset or checkpoint")->check(CLI::ExistingFile);
  app.add_option("--out", out, "output path");

  // generate
  auto* gen = app.add_subcommand("generate", "sample a synthetic dataset");
  std::int64_t count = 0;
  int dims = 0, gpaths = 0, glength = 0;
  auto* count_opt = gen->add_option("--count", count, "number of equations");
  auto* dims_opt = gen->add_option("--dims", dims, "only this dimension");
  auto* gpaths_opt = gen->add_option("--paths", gpaths, "paths per equation (all presets)");
  auto* glength_opt = gen->add_option("--length", glength, "points per path (all presets)");

  // train
  auto* tr = app.add_subcommand("train", "train the model on a dataset");
  std::string data, resume, log;
  std::int64_t steps = 0, ckpt_every = 0;
  double lr = 0.0;
  int batch = 0;
  bool quiet = false;
  auto* data_opt = tr->add_option("--data", data, "dataset file")->check(CLI::ExistingFile);
  auto* steps_opt = tr->add_option("--steps", steps);
  auto* lr_opt = tr->add_option("--lr", lr);
  auto* batch_opt = tr->add_option("--batch", batch);
  auto* every_opt = tr->add_option("--checkpoint-every", ckpt_every);
  auto* resume_opt = tr->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  auto* log_opt = tr->add_option("--log", log, "TSV loss log (default <out>.log.tsv)");
  tr->add_flag("--quiet", quiet);

  // shared by the inference-side commands
  std::string checkpoint, context, system;
  int record = 0;

  auto* inf = app.add_subcommand("infer", "estimate drift and diffusion from a context");
  std::string bounds, csv;
  int locations = 1024;
  inf->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  inf->add_option("--context", context, "CSV series or dataset file")->required()->check(CLI::ExistingFile);
  inf->add_option("--record", record, "record index when --context is a dataset");
  inf->add_option("--bounds", bounds, "grid box lo:hi,lo:hi");
  inf->add_option("--system", system, "take grid bounds from a catalog entry");
  inf->add_option("--locations", locations);
  auto* csv_opt = inf->add_option("--csv", csv, "also write the estimate as CSV");

  auto* ft = app.add_subcommand("finetune", "adapt a checkpoint to one observed series");
  std::string mode;
  int substeps = 0, iters = 0;
  double ft_lr = 0.0;
  ft->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  ft->add_option("--data", context, "CSV series or dataset file")->required()->check(CLI::ExistingFile);
  ft->add_option("--record", record);
  auto* mode_opt = ft->add_option("--mode", mode)->check(CLI::IsMember({"dense", "sparse"}));
  auto* sub_opt = ft->add_option("--substeps", substeps);
  auto* iters_opt = ft->add_option("--iters", iters);
  auto* ftlr_opt = ft->add_option("--lr", ft_lr);

  auto* sim = app.add_subcommand("simulate", "sample paths from a catalog system or a learned field");
  int spaths = 0, slength = 0, ssub = 0;
  double sdt = 0.0;
  sim->add_option("--system", system);
  auto* sck_opt = sim->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  auto* sctx_opt = sim->add_option("--context", context)->check(CLI::ExistingFile);
  sim->add_option("--record", record);
  auto* spaths_opt = sim->add_option("--paths", spaths);
  auto* slength_opt = sim->add_option("--length", slength);
  auto* sdt_opt = sim->add_option("--dt", sdt);
  auto* ssub_opt = sim->add_option("--subsample", ssub);

  auto* ev = app.add_subcommand("evaluate", "MSE and signature-MMD against a catalog system");
  EvaluateArgs ea;
  int level = 0;
  double bandwidth = 0.0;
  ev->add_option("--system", ea.system)->required();
  auto* eck_opt = ev->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  auto* ectx_opt = ev->add_option("--context", context)->check(CLI::ExistingFile);
  ev->add_option("--record", record);
  ev->add_option("--metric", ea.metric)->check(CLI::IsMember({"mse", "mmd", "all"}));
  ev->add_option("--context-sweep", ea.context_sweep, "context sizes, comma separated")->delimiter(',');
  ev->add_option("--locations", ea.locations);
  ev->add_option("--substeps", ea.substeps);
  ev->add_option("--permutations", ea.permutations, "null draws for the permutation test");
  auto* level_opt = ev->add_option("--level", level, "signature truncation level");
  auto* bw_opt = ev->add_option("--bandwidth", bandwidth, "RBF bandwidth (default median heuristic)");

  auto* cat = app.add_subcommand("catalog", "list or print the canonical systems");
  cat->add_option("--system", system);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    Settings s = preset_settings(preset);
    if (!config.empty()) apply_config_file(s, config);
    if (seed_opt->count() > 0) s.seed = seed;
    auto need_out = [&] {
      if (out.empty()) throw ConfigError("--out is required");
      return std::filesystem::path(out);
    };
    ContextArgs ctx{context, record};

    if (gen->parsed()) {
      if (count_opt->count() > 0) s.count = count;
      GenerateArgs a;
      a.out = need_out();
      set_if(a.dims, dims_opt, dims);
      set_if(a.paths, gpaths_opt, gpaths);
      set_if(a.length, glength_opt, glength);
      return cmd_generate(s, a);
    }
    if (tr->parsed()) {
      if (data_opt->count() > 0) s.dataset = data;
      if (steps_opt->count() > 0) s.train.steps = steps;
      if (lr_opt->count() > 0) s.train.lr = lr;
      if (batch_opt->count() > 0) s.train.batch = batch;
      if (every_opt->count() > 0) s.train.checkpoint_every = ckpt_every;
      TrainArgs a;
      a.out = need_out();
      if (resume_opt->count() > 0) a.resume = resume;
      if (log_opt->count() > 0) a.log = log;
      a.quiet = quiet;
      return cmd_train(s, a);
    }
    if (inf->parsed()) {
      InferArgs a{checkpoint, ctx, bounds, system, locations, need_out(), std::nullopt};
      if (csv_opt->count() > 0) a.csv = csv;
      return cmd_infer(s, a);
    }
    if (ft->parsed()) {
      if (mode_opt->count() > 0) s.finetune.mode = mode == "dense" ? FinetuneMode::Dense : FinetuneMode::Sparse;
      if (sub_opt->count() > 0) s.finetune.substeps = substeps;
      if (iters_opt->count() > 0) s.finetune.iters = iters;
      if (ftlr_opt->count() > 0) s.finetune.lr = ft_lr;
      return cmd_finetune(s, {checkpoint, ctx, need_out()});
    }
    if (sim->parsed()) {
      SimulateArgs a;
      a.system = system;
      if (sck_opt->count() > 0) a.checkpoint = checkpoint;
      if (sctx_opt->count() > 0) a.context = ctx;
      set_if(a.paths, spaths_opt, spaths);
      set_if(a.length, slength_opt, slength);
      set_if(a.dt, sdt_opt, sdt);
      set_if(a.subsample, ssub_opt, ssub);
      a.out = need_out();
      return cmd_simulate(s, a);
    }
    if (ev->parsed()) {
      if (level_opt->count() > 0) s.mmd.level = level;
      if (bw_opt->count() > 0) s.mmd.bandwidth = bandwidth;
      s.mmd.validate();
      if (eck_opt->count() > 0) ea.checkpoint = checkpoint;
      if (ectx_opt->count() > 0) ea.context = ctx;
      ea.out = need_out();
      return cmd_evaluate(s, ea);
    }
    if (cat->parsed()) {
      std::optional<std::filesystem::path> o;
      if (!out.empty()) o = out;
      return cmd_catalog(system, o);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
