#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sdefim/model.hpp"
#include "sdefim/simulation.hpp"

namespace sdefim {

/// Header row required: `time, x1, ..., xd` with an optional `series`
/// column naming the path. Rows of one series must have strictly
/// increasing times; series keep their order of first appearance.
PathBundle parse_series_csv(std::string_view text);
PathBundle read_series_csv(const std::filesystem::path& path);

/// series,time,x1..xd
std::string paths_to_csv(const PathBundle& bundle);
/// x1..xd, f1..fd, a1..ad, U
std::string estimate_to_csv(const VectorFieldEstimate& est);

}  // namespace sdefim
