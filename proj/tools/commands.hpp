#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdefim/finetune.hpp"
#include "sdefim/model.hpp"
#include "sdefim/prior.hpp"
#include "sdefim/signature.hpp"
#include "sdefim/trainer.hpp"

namespace sdefim::cli {

/// Everything a command may need, resolved as preset < config file < flags.
struct Settings {
  std::string preset = "toy";
  std::uint64_t seed = 0;
  std::int64_t count = 1000;
  PriorConfig prior;
  CorruptionConfig corruption;
  ModelConfig model;
  TrainConfig train;
  MmdConfig mmd;
  FinetuneConfig finetune;
  std::string dataset;  // training data path
};

Settings preset_settings(const std::string& name);

/// Overlays a JSON config. Accepts a plain JSON file with optional sections
/// (prior, corruption, model, train, mmd, finetune, count, seed, dataset)
/// or a dataset/checkpoint artifact, whose embedded config is used.
void apply_config_file(Settings& s, const std::filesystem::path& path);

nlohmann::json settings_json(const Settings& s);

struct GenerateArgs {
  std::filesystem::path out;
  std::optional<int> dims;
  std::optional<int> paths;
  std::optional<int> length;
};
int cmd_generate(Settings s, const GenerateArgs& a);

struct TrainArgs {
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> log;
  bool quiet = false;
};
int cmd_train(Settings s, const TrainArgs& a);

struct ContextArgs {
  std::filesystem::path path;  // CSV series or dataset file
  int record = 0;
};

struct InferArgs {
  std::filesystem::path checkpoint;
  ContextArgs context;
  std::string bounds;  // "lo:hi,lo:hi"
  std::string system;  // catalog entry supplying bounds
  int locations = 1024;
  std::filesystem::path out;
  std::optional<std::filesystem::path> csv;
};
int cmd_infer(Settings s, const InferArgs& a);

struct FinetuneArgs {
  std::filesystem::path checkpoint;
  ContextArgs data;
  std::filesystem::path out;
};
int cmd_finetune(Settings s, const FinetuneArgs& a);

struct SimulateArgs {
  std::string system;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<ContextArgs> context;
  std::optional<int> paths;
  std::optional<int> length;
  std::optional<double> dt;
  std::optional<int> subsample;
  std::filesystem::path out;
};
int cmd_simulate(Settings s, const SimulateArgs& a);

struct EvaluateArgs {
  std::string system;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<ContextArgs> context;
  std::string metric = "all";  // mse | mmd | all
  std::vector<long> context_sweep;
  int locations = 1024;
  int substeps = 1;
  int permutations = 0;
  std::filesystem::path out;
};
int cmd_evaluate(Settings s, const EvaluateArgs& a);

int cmd_catalog(const std::string& system, const std::optional<std::filesystem::path>& out);

}  // namespace sdefim::cli
