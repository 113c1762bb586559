// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "core/importance.hpp"
#include "core/scheduler.hpp"
#include "core/simulator.hpp"

namespace heatkv {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Importance scores together with their provenance, as stored in a scores
/// file.
struct ScoresFile {
    Config config;
    long long sample_count = 0;
    ImportanceTable table;
};

// All emitters are byte-deterministic: objects serialize with sorted keys
// and floats print in shortest round-trip form.

nlohmann::json config_to_json(const Config& config);
Config config_from_json(const nlohmann::json& j);  // ParseError naming the field

std::string scores_to_json_text(const ScoresFile& scores);
ScoresFile scores_from_json_text(const std::string& text);

std::string schedule_to_json_text(const SchedulePlan& plan);
SchedulePlan schedule_from_json_text(const std::string& text);

std::string report_to_json_text(const SimulationReport& report, const SchedulePlan& plan);
std::string report_to_csv_text(const SimulationReport& report, const SchedulePlan& plan);

std::string optimality_to_json_text(const OptimalityReport& report, const SchedulePlan& plan);

/// L x H grid for one scale: 0 retained, 1 pruned (in G_k), 2 evicted early
/// (in E_k), 3 absent before the scale began (in G_{k-1}). In scale mode a
/// head takes the highest-precedence category (absent > early > pruned) over
/// its head-scale entries. Header row carries head indices, first column
/// layer indices. ArgumentError for scales outside [1, K-1].
std::string heatmap_to_csv_text(const SchedulePlan& plan, int scale);

/// FNV-1a 64-bit content digest, "fnv1a64:" + 16 hex digits.
std::string fnv1a64_hex(std::string_view bytes);

std::string read_text_file(const std::filesystem::path& path);      // IoError with path
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace heatkv
