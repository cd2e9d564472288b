#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sdefim/binary_io.hpp"
#include "sdefim/catalog.hpp"
#include "sdefim/checkpoint.hpp"
#include "sdefim/dataset.hpp"
#include "sdefim/error.hpp"
#include "sdefim/metrics.hpp"
#include "sdefim/series_csv.hpp"

namespace sdefim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Settings preset_settings(const std::string& name) {
  Settings s;
  s.preset = name;
  s.prior.keep_clean = false;
  if (name == "toy") {
    s.count = 5000;
    s.prior.paths_override = 10;
    s.train.batch = 8;
    s.train.context_min = 64;
    s.train.context_max = 256;
    s.train.locations = 32;
    s.train.lr = 1e-3;
    s.train.steps = 2000;
  } else if (name == "small") {
    s.count = 20000;
    s.train.batch = 16;
    s.train.context_min = 64;
    s.train.context_max = 1024;
    s.train.steps = 20000;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected toy or small)");
  }
  return s;
}

namespace {

bool starts_with(const std::string& bytes, std::string_view magic) {
  return bytes.size() >= magic.size() && std::string_view(bytes).substr(0, magic.size()) == magic;
}

json patched(json base, const json& patch) {
  base.merge_patch(patch);
  return base;
}

void apply_train_json(Settings& s, const json& train) {
  if (train.contains("train")) s.train = train_config_from_json(train.at("train"));
  if (train.contains("finetune")) s.finetune = finetune_config_from_json(train.at("finetune"));
  if (train.contains("dataset")) s.dataset = train.at("dataset").get<std::string>();
  if (train.contains("preset")) s.preset = train.at("preset").get<std::string>();
}

}  // namespace

void apply_config_file(Settings& s, const fs::path& path) {
  const std::string bytes = read_file(path);
  if (starts_with(bytes, "SDEFIMDS")) {
    const Dataset ds = decode_dataset(bytes);
    s.prior = ds.prior;
    s.corruption = ds.corruption;
    s.seed = ds.seed;
    s.count = static_cast<std::int64_t>(ds.records.size());
    return;
  }
  if (starts_with(bytes, "SDEFIMCK")) {
    const Checkpoint ck = decode_checkpoint(bytes);
    s.model = ck.model;
    s.seed = ck.seed;
    apply_train_json(s, ck.train);
    return;
  }
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is neither JSON nor a known artifact: " + e.what());
  }
  if (j.contains("config") && j.at("config").is_object()) j = j.at("config");
  try {
    if (j.contains("preset")) {
      const std::string p = j.at("preset").get<std::string>();
      if (p != s.preset) s = preset_settings(p);
    }
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("count")) s.count = j.at("count").get<std::int64_t>();
    if (j.contains("dataset")) s.dataset = j.at("dataset").get<std::string>();
    if (j.contains("prior")) s.prior = prior_config_from_json(patched(to_json(s.prior), j.at("prior")));
    if (j.contains("corruption")) {
      s.corruption = corruption_config_from_json(patched(to_json(s.corruption), j.at("corruption")));
    }
    if (j.contains("model")) s.model = model_config_from_json(patched(to_json(s.model), j.at("model")));
    if (j.contains("train")) s.train = train_config_from_json(patched(to_json(s.train), j.at("train")));
    if (j.contains("mmd")) s.mmd = mmd_config_from_json(patched(to_json(s.mmd), j.at("mmd")));
    if (j.contains("finetune")) {
      s.finetune = finetune_config_from_json(patched(to_json(s.finetune), j.at("finetune")));
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad config " + path.string() + ": " + e.what());
  }
}

json settings_json(const Settings& s) {
  return {{"preset", s.preset},
          {"seed", s.seed},
          {"count", s.count},
          {"dataset", s.dataset},
          {"prior", to_json(s.prior)},
          {"corruption", to_json(s.corruption)},
          {"model", to_json(s.model)},
          {"train", to_json(s.train)},
          {"mmd", to_json(s.mmd)},
          {"finetune", to_json(s.finetune)}};
}

namespace {

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p += suffix;
  return p;
}

PathBundle load_bundle(const ContextArgs& c) {
  const std::string bytes = read_file(c.path);
  if (starts_with(bytes, "SDEFIMDS")) {
    const Dataset ds = decode_dataset(bytes);
    if (c.record < 0 || c.record >= static_cast<int>(ds.records.size())) {
      throw DataError("record " + std::to_string(c.record) + " not in dataset " + c.path.string());
    }
    return ds.records[c.record].observed;
  }
  return parse_series_csv(bytes);
}

ObservationSet load_context(const ContextArgs& c) {
  ObservationSet set = to_observation_set(load_bundle(c)).set;
  if (set.empty()) throw DataError("context " + c.path.string() + " holds no transitions");
  return set;
}

json context_json(const ContextArgs& c) { return {{"path", c.path.string()}, {"record", c.record}}; }

std::vector<std::pair<double, double>> parse_bounds(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ConfigError("bounds must look like lo:hi,lo:hi");
    try {
      out.emplace_back(std::stod(part.substr(0, colon)), std::stod(part.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse bounds '" + part + "'");
    }
  }
  return out;
}

std::vector<std::pair<double, double>> context_box(const ObservationSet& set) {
  std::vector<std::pair<double, double>> out;
  for (int j = 0; j < set.dim; ++j) out.emplace_back(set.y.col(j).minCoeff(), set.y.col(j).maxCoeff());
  return out;
}

Checkpoint load_checkpoint(const fs::path& p) { return read_checkpoint(p); }

// Log rows carry wall time, so the log is not part of byte-identity checks.
struct LogRow {
  LossReport r;
  double wall = 0.0;
};

std::string log_text(const std::vector<LogRow>& rows) {
  std::ostringstream os;
  os << "step\tl1\tweighted\tmean_u\tgrad_norm\tskipped\twall_time_s\n";
  os << std::setprecision(10);
  for (const auto& row : rows) {
    os << row.r.step << '\t' << row.r.l1 << '\t' << row.r.weighted << '\t' << row.r.mean_u << '\t' << row.r.grad_norm
       << '\t' << (row.r.skipped ? 1 : 0) << '\t' << row.wall << '\n';
  }
  return os.str();
}

std::vector<LogRow> read_log(const fs::path& p, std::int64_t before_step) {
  std::vector<LogRow> rows;
  std::ifstream in(p);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    LogRow row;
    int skipped = 0;
    if (!(ls >> row.r.step >> row.r.l1 >> row.r.weighted >> row.r.mean_u >> row.r.grad_norm >> skipped >> row.wall)) {
      continue;
    }
    row.r.skipped = skipped != 0;
    if (row.r.step < before_step) rows.push_back(row);
  }
  return rows;
}

Checkpoint training_checkpoint(const Settings& s, const TrainState& st) {
  Checkpoint ck;
  ck.model = s.model;
  ck.train = {{"train", to_json(s.train)}, {"dataset", s.dataset}, {"preset", s.preset}};
  ck.step = st.step;
  ck.seed = s.seed;
  ck.params = st.params;
  ck.optimizer = st.optimizer;
  ck.extra = {{"command", "train"}};
  return ck;
}

}  // namespace

int cmd_generate(Settings s, const GenerateArgs& a) {
  if (a.dims) {
    if (*a.dims < 1 || *a.dims > s.prior.d_max) throw ConfigError("--dims must lie in [1, d_max]");
    s.prior.dim_ratio.assign(s.prior.d_max, 0);
    s.prior.dim_ratio[*a.dims - 1] = 1;
  }
  if (a.paths) s.prior.paths_override = *a.paths;
  if (a.length) s.prior.length_override = *a.length;
  if (s.count < 1) throw ConfigError("--count must be positive");
  s.prior.validate();
  s.corruption.validate();
  const Dataset ds = generate_dataset(s.prior, s.corruption, s.count, s.seed);
  write_dataset(a.out, ds);
  write_json(sibling(a.out, ".manifest.json"), manifest_json(ds));
  std::cout << "wrote " << ds.records.size() << " records to " << a.out.string() << "\n";
  for (const auto& st : ds.stats) {
    if (st.accepted == 0) continue;
    std::cout << "  d=" << st.dim << " accepted " << st.accepted << " attempts " << st.attempts << " rejection "
              << std::fixed << std::setprecision(3) << st.rejection_rate() << "\n";
  }
  return 0;
}

int cmd_train(Settings s, const TrainArgs& a) {
  if (s.dataset.empty()) throw ConfigError("train needs --data or a config naming the dataset");
  s.train.seed = s.seed;
  s.train.validate();
  s.model.validate();
  const Dataset ds = read_dataset(s.dataset);
  if (ds.records.empty()) throw DataError("dataset " + s.dataset + " is empty");
  TrainState st;
  if (a.resume) {
    const Checkpoint ck = load_checkpoint(*a.resume);
    if (to_json(ck.model) != to_json(s.model)) throw ConfigError("resume checkpoint has a different model config");
    if (!ck.optimizer) throw DataError("resume checkpoint carries no optimizer state");
    st.params = ck.params;
    st.optimizer = *ck.optimizer;
    st.step = ck.step;
  } else {
    st = initial_state(s.model, s.seed);
  }
  const fs::path log_path = a.log ? *a.log : sibling(a.out, ".log.tsv");
  std::vector<LogRow> rows = a.resume ? read_log(log_path, st.step) : std::vector<LogRow>{};
  const auto t0 = std::chrono::steady_clock::now();
  const double wall_offset = rows.empty() ? 0.0 : rows.back().wall;
  while (st.step < s.train.steps) {
    const LossReport r = train_step(s.model, s.train, st, ds.records);
    const double wall = wall_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back({r, wall});
    if (!a.quiet && (st.step % 100 == 0 || st.step == s.train.steps)) {
      std::cerr << "step " << st.step << " l1 " << r.l1 << " weighted " << r.weighted << " mean_u " << r.mean_u
                << (r.skipped ? " (skipped)" : "") << " " << std::fixed << std::setprecision(1) << wall << "s\n"
                << std::defaultfloat;
    }
    if (s.train.checkpoint_every > 0 && st.step % s.train.checkpoint_every == 0 && st.step < s.train.steps) {
      write_checkpoint(sibling(a.out, ".step-" + std::to_string(st.step)), training_checkpoint(s, st));
      write_file_atomic(log_path, log_text(rows));
    }
  }
  write_checkpoint(a.out, training_checkpoint(s, st));
  write_file_atomic(log_path, log_text(rows));
  std::cout << "wrote checkpoint at step " << st.step << " to " << a.out.string() << "\n";
  return 0;
}

int cmd_infer(Settings s, const InferArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const ObservationSet set = load_context(a.context);
  std::vector<std::pair<double, double>> bounds;
  if (!a.bounds.empty()) {
    bounds = parse_bounds(a.bounds);
  } else if (!a.system.empty()) {
    bounds = canonical_system(a.system).bounds;
  } else {
    bounds = context_box(set);
  }
  if (static_cast<int>(bounds.size()) != set.dim) throw DimensionError("grid bounds do not match the context");
  const EvalGrid grid{bounds, a.locations};
  const InferenceSession session(ck.model, ck.params, set);
  const VectorFieldEstimate est = session.estimate(grid.points());
  json grid_json = json::array();
  for (const auto& [lo, hi] : bounds) grid_json.push_back({lo, hi});
  const json out = {{"config",
                     {{"command", "infer"},
                      {"checkpoint", a.checkpoint.string()},
                      {"checkpoint_step", ck.step},
                      {"checkpoint_seed", ck.seed},
                      {"model", to_json(ck.model)},
                      {"context", context_json(a.context)},
                      {"grid", {{"bounds", grid_json}, {"locations", a.locations}, {"per_axis", grid.per_axis()}}},
                      {"seed", s.seed}}},
                    {"transitions", set.size()},
                    {"estimate", to_json(est)}};
  write_json(a.out, out);
  if (a.csv) write_file_atomic(*a.csv, estimate_to_csv(est));
  std::cout << "estimated fields at " << est.locations.rows() << " locations\n";
  return 0;
}

int cmd_finetune(Settings s, const FinetuneArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const ObservationSet series = load_context(a.data);
  FinetuneConfig cfg = s.finetune;
  cfg.seed = s.seed;
  cfg.validate();
  ParameterSet params = ck.params;
  const FinetuneResult r = finetune(ck.model, params, series, cfg);
  Checkpoint out;
  out.model = ck.model;
  out.train = {{"finetune", to_json(cfg)}, {"source", a.checkpoint.string()}, {"data", context_json(a.data)}};
  out.step = ck.step;
  out.seed = s.seed;
  out.params = std::move(params);
  out.extra = {{"command", "finetune"},
               {"trace", r.trace},
               {"final_objective", r.final_objective},
               {"floored", r.floored}};
  write_checkpoint(a.out, out);
  std::ostringstream trace;
  trace << "iter\tobjective\n" << std::setprecision(12);
  for (std::size_t i = 0; i < r.trace.size(); ++i) trace << i << '\t' << r.trace[i] << '\n';
  trace << r.trace.size() << '\t' << r.final_objective << '\n';
  write_file_atomic(sibling(a.out, ".trace.tsv"), trace.str());
  std::cout << "objective " << (r.trace.empty() ? r.final_objective : r.trace.front()) << " -> " << r.final_objective
            << " after " << cfg.iters << " iterations\n";
  if (r.floored > 0) std::cerr << "warning: diffusion floored at " << r.floored << " entries\n";
  return 0;
}

int cmd_simulate(Settings s, const SimulateArgs& a) {
  std::optional<CatalogEntry> entry;
  if (!a.system.empty()) entry = canonical_system(a.system);
  ObservationLayout layout = entry ? entry->reference : ObservationLayout{0.002, 1, 10, 500};
  if (a.paths) layout.paths = *a.paths;
  if (a.length) layout.length = *a.length;
  if (a.dt) layout.dt = *a.dt;
  if (a.subsample) layout.subsample = *a.subsample;
  PathBundle bundle;
  json source;
  if (a.checkpoint) {
    if (!a.context) throw ConfigError("simulating a learned field needs --context");
    const Checkpoint ck = load_checkpoint(*a.checkpoint);
    const PathBundle ctx = load_bundle(*a.context);
    const InferenceSession field(ck.model, ck.params, to_observation_set(ctx).set);
    if (entry && entry->system.dim() != field.dim()) throw DimensionError("context does not match --system");
    Eigen::MatrixXd x0(layout.paths, field.dim());
    RandomStream init(s.seed, {0x1a});
    for (int k = 0; k < layout.paths; ++k) {
      if (entry) {
        x0.row(k) = entry->initial.sample(init).transpose();
      } else {
        x0.row(k) = ctx.paths[k % ctx.path_count()].states.row(0);
      }
    }
    std::vector<double> times(layout.length);
    for (int i = 0; i < layout.length; ++i) times[i] = i * layout.gap();
    bundle = simulate_field(field, x0, times, layout.subsample, RandomStream(s.seed, {0x1b}), kDivergenceFilter);
    source = {{"checkpoint", a.checkpoint->string()}, {"context", context_json(*a.context)}};
  } else {
    if (!entry) throw ConfigError("simulate needs --system or --checkpoint with --context");
    bundle = simulate_layout(entry->system, entry->initial, layout, RandomStream(s.seed));
    source = {{"system", to_json(entry->system)}};
  }
  write_file_atomic(a.out, paths_to_csv(bundle));
  int diverged = 0;
  for (auto d : bundle.divergence) diverged += d != Divergence::None ? 1 : 0;
  write_json(sibling(a.out, ".json"), {{"config",
                                        {{"command", "simulate"},
                                         {"system", a.system},
                                         {"seed", s.seed},
                                         {"layout",
                                          {{"dt", layout.dt},
                                           {"subsample", layout.subsample},
                                           {"paths", layout.paths},
                                           {"length", layout.length}}},
                                         {"source", source}}},
                                       {"diverged_paths", diverged}});
  std::cout << "simulated " << bundle.path_count() << " paths to " << a.out.string() << "\n";
  return 0;
}

int cmd_evaluate(Settings s, const EvaluateArgs& a) {
  if (a.system.empty()) throw ConfigError("evaluate needs --system");
  if (a.metric != "mse" && a.metric != "mmd" && a.metric != "all") throw ConfigError("--metric must be mse, mmd or all");
  const CatalogEntry entry = canonical_system(a.system);
  std::optional<Checkpoint> ck;
  if (a.checkpoint) ck = load_checkpoint(*a.checkpoint);
  if (!a.context_sweep.empty() && !ck) throw ConfigError("--context-sweep needs --checkpoint");

  const RandomStream root(s.seed);
  ObservationLayout ctx_layout = entry.context;
  long longest = 0;
  for (long n : a.context_sweep) {
    if (n < 1) throw ConfigError("context sizes must be positive");
    longest = std::max(longest, n);
  }
  if (longest > 0) ctx_layout.length = std::max<int>(ctx_layout.length, static_cast<int>(longest) + 1);
  ObservationSet context;
  if (ck) {
    context = a.context ? load_context(*a.context)
                        : to_observation_set(simulate_layout(entry.system, entry.initial, ctx_layout, root.split(1))).set;
  }
  std::optional<InferenceSession> session;
  if (ck) session.emplace(ck->model, ck->params, context);
  const SystemField truth(entry.system);
  const VectorField& candidate = session ? static_cast<const VectorField&>(*session) : truth;

  json report;
  report["config"] = {{"command", "evaluate"},
                      {"system", a.system},
                      {"seed", s.seed},
                      {"candidate", ck ? json(a.checkpoint->string()) : json("ground-truth")},
                      {"context", a.context ? context_json(*a.context) : json("simulated")},
                      {"mmd", to_json(s.mmd)},
                      {"substeps", a.substeps},
                      {"locations", a.locations}};
  const EvalGrid grid{entry.bounds, a.locations};
  const Eigen::MatrixXd points = grid.points();
  if (a.metric != "mmd") {
    const VectorFieldEstimate est = session ? session->estimate(points) : evaluate_field(truth, points);
    report["mse"] = to_json(mse_on_grid(est, entry.system));
  }
  if (a.metric != "mse") {
    const PathBundle reference = simulate_layout(entry.system, entry.initial, entry.reference, root.split(2));
    ProtocolConfig pc;
    pc.mmd = s.mmd;
    pc.substeps = a.substeps;
    pc.seed = s.seed;
    const ProtocolResult r = mmd_protocol(candidate, reference, pc);
    json m = {{"mmd2", r.mmd2},
              {"bandwidth", r.bandwidth},
              {"level", s.mmd.level},
              {"base", s.mmd.base == BaseKernel::Rbf ? "rbf" : "linear"},
              {"diverged_paths", r.diverged_paths}};
    if (a.permutations > 0) {
      MmdConfig fixed = s.mmd;
      fixed.bandwidth = r.bandwidth;
      const auto t = permutation_test(path_states(r.simulated), path_states(reference), fixed, a.permutations, s.seed);
      m["null_mean"] = t.null_mean();
      m["null_sd"] = t.null_sd();
      m["null_q99"] = t.null_quantile(0.99);
      m["p_value"] = t.p_value();
    }
    report["mmd"] = m;
  }
  if (!a.context_sweep.empty()) {
    json sweep = json::array();
    for (long n : a.context_sweep) {
      std::vector<Eigen::Index> rows(std::min<Eigen::Index>(n, context.size()));
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(rows.size()); ++i) rows[i] = i;
      const InferenceSession sub(ck->model, ck->params, context.select(rows));
      const GridMse m = mse_on_grid(sub.estimate(points), entry.system);
      json row = to_json(m);
      row["context_size"] = rows.size();
      sweep.push_back(row);
    }
    report["context_sweep"] = sweep;
  }
  write_json(a.out, report);
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_catalog(const std::string& system, const std::optional<fs::path>& out) {
  json j;
  if (system.empty()) {
    j = json::array();
    for (const auto& name : catalog_names()) j.push_back(to_json(canonical_system(name)));
  } else {
    j = to_json(canonical_system(system));
  }
  if (out) {
    write_json(*out, j);
  } else {
    std::cout << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace sdefim::cli
