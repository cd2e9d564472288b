#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdefim/prior.hpp"

namespace sdefim {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

struct DimensionStats {
  int dim = 0;
  std::int64_t accepted = 0;
  std::int64_t attempts = 0;
  std::int64_t non_finite = 0;
  std::int64_t threshold = 0;

  double rejection_rate() const noexcept {
    return attempts == 0 ? 0.0 : static_cast<double>(non_finite + threshold) / static_cast<double>(attempts);
  }
};

struct Dataset {
  PriorConfig prior;
  CorruptionConfig corruption;
  std::uint64_t seed = 0;
  std::vector<EquationRecord> records;
  /// Filled by generate_dataset; not part of the file.
  std::vector<DimensionStats> stats;
};

/// Splits `count` across dimensions 1..d_max proportionally to the ratio
/// (largest remainder, ties to the higher dimension).
std::vector<std::int64_t> allocate_dimensions(std::int64_t count, const std::vector<int>& ratio);

/// Generates `count` accepted records. Slot i draws everything from the
/// substream (seed, i), so the output is independent of worker count.
/// Throws NumericError if a slot exceeds `prior.max_attempts` rejections.
Dataset generate_dataset(const PriorConfig& prior, const CorruptionConfig& corruption, std::int64_t count,
                         std::uint64_t seed);

/// Header {magic, version, config JSON, seed} then length-prefixed records,
/// all numbers little-endian.
std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

/// Configuration block embedded in the dataset header.
nlohmann::json dataset_config_json(const Dataset& dataset);
/// Debug export of the full dataset as structured text.
nlohmann::json dataset_to_json(const Dataset& dataset);
nlohmann::json manifest_json(const Dataset& dataset);

nlohmann::json to_json(const PathBundle& bundle);

}  // namespace sdefim
