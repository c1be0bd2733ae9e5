#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "evospec/common.hpp"

namespace evospec {

/// One monitoring site. Missing temperatures are NaN until filled.
struct StationRecord {
  std::string site_id;
  double lon = 0.0;   // degrees east
  double lat = 0.0;   // degrees north
  double elev = 0.0;  // meters
  Series temps;       // degC, one value per minute
};

/// Local sunrise and sunset at the central site, minutes after midnight.
struct DayLight {
  double sunrise = 0.0;
  double sunset = 0.0;
};

/// Direction and speed of the local-time phase shift.
struct SolarClock {
  double theta = 4.0;                      // minutes per degree
  std::array<double, 2> phi{-1.0, 0.0};    // (lon, lat) direction
};

struct StationSet {
  std::vector<StationRecord> records;
  Series radiation;              // W/m^2 at the central site
  std::vector<DayLight> days;
  std::string central_id;
  double central_lon = 0.0;
  double central_lat = 0.0;

  std::size_t n() const { return records.size(); }
  std::size_t T() const { return radiation.size(); }
  std::size_t gap_count() const;
  /// Index of a site by id, or nullopt.
  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws ValidationError on any broken invariant.
  void validate() const;
};

/// Sidecar metadata: site coordinates, central site, per-day sunrise/sunset.
struct SiteMeta {
  std::string id;
  double lon = 0.0, lat = 0.0, elev = 0.0;
};

struct StationMetadata {
  std::vector<SiteMeta> sites;
  std::string central_id;
  double central_lon = 0.0;
  double central_lat = 0.0;
  std::vector<DayLight> days;
};

StationMetadata parse_metadata(std::istream& in);
StationMetadata metadata_of(const StationSet& data);
void write_metadata(const StationMetadata& meta, std::ostream& out);

/// CSV layout: header `minute,<site ids...>,<radiation>`; minute is 1-based;
/// an empty cell is a missing value. Metadata is joined by site id.
StationSet parse_station_csv(std::istream& csv, const StationMetadata& meta);
StationSet load_station_csv(const std::filesystem::path& csv, const std::filesystem::path& meta);
/// Writes the canonical CSV form (shortest round-trip decimal for each value).
void write_station_csv(const StationSet& data, std::ostream& out);

/// Linear interpolation across interior gaps (NaN). Boundary gaps throw.
Series fill_missing_linear(const Series& series);
/// Fills every site and the radiation series.
StationSet fill_missing(StationSet data);

/// Minutes by which local solar events at `site_lon` lag those at `ref_lon`.
double local_phase_offset(const SolarClock& clock, double site_lon, double ref_lon);

/// Keeps only the named sites (in the given order).
StationSet select_sites(const StationSet& data, const std::vector<std::string>& ids);
/// Drops the named sites.
StationSet drop_sites(const StationSet& data, const std::vector<std::string>& ids);

/// Local equirectangular projection to km (111.2 km per degree latitude,
/// 111.2*cos(ref_lat) km per degree longitude).
std::array<double, 2> project_km(double lon, double lat, double ref_lon, double ref_lat);

/// Binary dataset container used between CLI stages.
void save_dataset(const StationSet& data, const std::filesystem::path& path);
StationSet load_dataset(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace evospec
