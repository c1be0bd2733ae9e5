#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "evospec/optimizer.hpp"
#include "evospec/simulation.hpp"
#include "evospec/trend_jump.hpp"

namespace evospec {

using json = nlohmann::json;

/// FNV-1a 64-bit over raw bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// Hash of the canonical (sorted-key, compact) serialization.
std::string config_hash(const json& config);
std::string file_hash(const std::filesystem::path& path);

/// Writes via a temporary file in the same directory and renames, so a
/// failed stage never leaves a truncated artifact behind.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

json to_json(const TrendFit& trend);
TrendFit trend_from_json(const json& j);

json to_json(const EvoSpectrumModel& evo, const CoherenceModel& coh);
json to_json(const FitResult& fit);
FitResult fit_from_json(const json& j);

std::vector<BurstInterval> bursts_from_json(const json& j);
json to_json(const std::vector<BurstInterval>& bursts);

std::vector<TargetSite> targets_from_json(const json& j);
json to_json(const std::vector<TargetSite>& targets);

json to_json(const CoverageReport& r);

/// table.csv: sunrise,sunset,negloglik,delta_thousands (empty cells for failed rows).
std::string grid_table_csv(const GridSearchTable& table);
GridSearchTable parse_grid_table_csv(const std::string& text);
std::string alpha_curve_csv(const AlphaCurve& curve);

/// Per-target ensemble CSV (minute, draw_1..draw_S) and bands CSV (minute, lower, upper).
std::string ensemble_csv(const std::vector<Series>& draws);
std::vector<Series> parse_ensemble_csv(const std::string& text);
std::string bands_csv(const Bands& bands);
Bands parse_bands_csv(const std::string& text);

/// Wide per-site table: minute,<id...>. Used for held-out truth.
std::string series_table_csv(const std::vector<std::string>& ids, const std::vector<Series>& series);
struct SeriesTable {
  std::vector<std::string> ids;
  std::vector<Series> series;
};
SeriesTable parse_series_table_csv(const std::string& text);

}  // namespace evospec
