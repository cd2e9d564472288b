#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "sdefim/model.hpp"
#include "sdefim/optimizer.hpp"

namespace sdefim {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig model;
  /// Training configuration that produced the weights (free-form JSON).
  nlohmann::json train = nlohmann::json::object();
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  ParameterSet params;
  std::optional<AdamWState> optimizer;
  /// Extra provenance (dataset path, finetuning trace, ...).
  nlohmann::json extra = nlohmann::json::object();
};

/// "SDEFIMCK", version, JSON header, named-offset table, f64 blob, then
/// optional optimizer moments. Little-endian throughout.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace sdefim
