#include "evospec/data_ingest.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace evospec {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr char kMagic[8] = {'E', 'V', 'O', 'S', 'P', 'E', 'C', '1'};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t line_no) {
  const std::string s = trim(raw);
  if (s.empty()) return kNaN;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError("line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::size_t StationSet::gap_count() const {
  std::size_t gaps = 0;
  for (const auto& r : records)
    for (double v : r.temps)
      if (std::isnan(v)) ++gaps;
  for (double v : radiation)
    if (std::isnan(v)) ++gaps;
  return gaps;
}

std::optional<std::size_t> StationSet::find(const std::string& id) const {
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].site_id == id) return i;
  return std::nullopt;
}

void StationSet::validate() const {
  if (records.empty()) throw ValidationError("station set has no sites");
  for (const auto& r : records) {
    if (r.temps.size() != T())
      throw ValidationError("site " + r.site_id + " has " + std::to_string(r.temps.size()) +
                            " values, expected " + std::to_string(T()));
    if (r.lon < -180 || r.lon > 180 || r.lat < -90 || r.lat > 90)
      throw ValidationError("site " + r.site_id + " has coordinates out of range");
  }
  for (std::size_t d = 0; d < days.size(); ++d)
    if (!(days[d].sunrise < days[d].sunset))
      throw ValidationError("day " + std::to_string(d + 1) + ": sunrise must precede sunset");
}

StationMetadata parse_metadata(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("metadata: ") + e.what());
  }
  StationMetadata meta;
  try {
    for (const auto& s : j.at("sites"))
      meta.sites.push_back({s.at("id").get<std::string>(), s.at("lon").get<double>(),
                            s.at("lat").get<double>(), s.value("elev", 0.0)});
    const auto& c = j.at("central");
    meta.central_id = c.at("id").get<std::string>();
    meta.central_lon = c.at("lon").get<double>();
    meta.central_lat = c.value("lat", std::numeric_limits<double>::quiet_NaN());
    if (j.contains("days"))
      for (const auto& d : j.at("days"))
        meta.days.push_back({d.at("sunrise").get<double>(), d.at("sunset").get<double>()});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("metadata: ") + e.what());
  }
  if (std::isnan(meta.central_lat)) {
    // Fall back to the central site's own latitude, else the network mean.
    double sum = 0.0;
    meta.central_lat = 0.0;
    bool found = false;
    for (const auto& s : meta.sites) {
      sum += s.lat;
      if (s.id == meta.central_id) {
        meta.central_lat = s.lat;
        found = true;
      }
    }
    if (!found && !meta.sites.empty()) meta.central_lat = sum / static_cast<double>(meta.sites.size());
  }
  return meta;
}

StationMetadata metadata_of(const StationSet& data) {
  StationMetadata meta;
  for (const auto& r : data.records) meta.sites.push_back({r.site_id, r.lon, r.lat, r.elev});
  meta.central_id = data.central_id;
  meta.central_lon = data.central_lon;
  meta.central_lat = data.central_lat;
  meta.days = data.days;
  return meta;
}

void write_metadata(const StationMetadata& meta, std::ostream& out) {
  json j;
  j["sites"] = json::array();
  for (const auto& s : meta.sites)
    j["sites"].push_back({{"id", s.id}, {"lon", s.lon}, {"lat", s.lat}, {"elev", s.elev}});
  j["central"] = {{"id", meta.central_id}, {"lon", meta.central_lon}, {"lat", meta.central_lat}};
  j["days"] = json::array();
  for (const auto& d : meta.days) j["days"].push_back({{"sunrise", d.sunrise}, {"sunset", d.sunset}});
  out << j.dump(2) << "\n";
}

StationSet parse_station_csv(std::istream& csv, const StationMetadata& meta) {
  std::string line;
  if (!std::getline(csv, line)) throw ValidationError("line 1: empty CSV");
  const auto header = split_csv_line(line);
  if (header.size() < 3)
    throw ValidationError("line 1: header needs minute, at least one site and a radiation column");
  const std::size_t n_sites = header.size() - 2;

  StationSet data;
  data.central_id = meta.central_id;
  data.central_lon = meta.central_lon;
  data.central_lat = meta.central_lat;
  data.days = meta.days;
  for (std::size_t k = 0; k < n_sites; ++k) {
    const std::string id = trim(header[k + 1]);
    auto it = std::find_if(meta.sites.begin(), meta.sites.end(),
                           [&](const SiteMeta& s) { return s.id == id; });
    if (it == meta.sites.end()) throw ValidationError("site '" + id + "' not found in metadata");
    data.records.push_back({id, it->lon, it->lat, it->elev, {}});
  }

  std::map<long, std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(cells.size()));
    const double minute = parse_cell(cells[0], line_no);
    if (std::isnan(minute) || minute != std::floor(minute) || minute < 1)
      throw ValidationError("line " + std::to_string(line_no) + ": bad minute index");
    const long m = static_cast<long>(minute);
    if (rows.count(m)) throw ValidationError("line " + std::to_string(line_no) + ": duplicate minute " + std::to_string(m));
    std::vector<double> vals(cells.size() - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) vals[c - 1] = parse_cell(cells[c], line_no);
    rows.emplace(m, std::move(vals));
  }
  long expect = 1;
  for (const auto& [m, vals] : rows) {
    if (m != expect) throw ValidationError("minute " + std::to_string(expect) + " is absent");
    ++expect;
    for (std::size_t k = 0; k < n_sites; ++k) data.records[k].temps.push_back(vals[k]);
    data.radiation.push_back(vals[n_sites]);
  }
  data.validate();
  return data;
}

StationSet load_station_csv(const std::filesystem::path& csv, const std::filesystem::path& meta) {
  std::ifstream mf(meta);
  if (!mf) throw ValidationError("cannot open metadata file " + meta.string());
  const auto md = parse_metadata(mf);
  std::ifstream cf(csv);
  if (!cf) throw ValidationError("cannot open CSV file " + csv.string());
  return parse_station_csv(cf, md);
}

void write_station_csv(const StationSet& data, std::ostream& out) {
  out << "minute";
  for (const auto& r : data.records) out << ',' << r.site_id;
  out << ",radiation\n";
  auto cell = [&](double v) {
    if (!std::isnan(v)) out << format_double(v);
  };
  for (std::size_t t = 0; t < data.T(); ++t) {
    out << (t + 1);
    for (const auto& r : data.records) {
      out << ',';
      cell(r.temps[t]);
    }
    out << ',';
    cell(data.radiation[t]);
    out << '\n';
  }
}

Series fill_missing_linear(const Series& series) {
  Series out = series;
  if (out.empty()) return out;
  if (std::isnan(out.front()) || std::isnan(out.back()))
    throw ValidationError("gap at series boundary; truncate the record so it starts and ends with observed values");
  std::size_t last = 0;
  for (std::size_t t = 1; t < out.size(); ++t) {
    if (std::isnan(out[t])) continue;
    if (t > last + 1) {
      const double a = out[last], b = out[t];
      const double span = static_cast<double>(t - last);
      for (std::size_t u = last + 1; u < t; ++u)
        out[u] = a + (b - a) * static_cast<double>(u - last) / span;
    }
    last = t;
  }
  return out;
}

StationSet fill_missing(StationSet data) {
  for (auto& r : data.records) {
    try {
      r.temps = fill_missing_linear(r.temps);
    } catch (const ValidationError& e) {
      throw ValidationError("site " + r.site_id + ": " + e.what());
    }
  }
  data.radiation = fill_missing_linear(data.radiation);
  return data;
}

double local_phase_offset(const SolarClock& clock, double site_lon, double ref_lon) {
  return clock.theta * clock.phi[0] * (site_lon - ref_lon);
}

StationSet select_sites(const StationSet& data, const std::vector<std::string>& ids) {
  StationSet out = data;
  out.records.clear();
  for (const auto& id : ids) {
    auto k = data.find(id);
    if (!k) throw ValidationError("unknown site '" + id + "'");
    out.records.push_back(data.records[*k]);
  }
  return out;
}

StationSet drop_sites(const StationSet& data, const std::vector<std::string>& ids) {
  for (const auto& id : ids)
    if (!data.find(id)) throw ValidationError("unknown site '" + id + "'");
  StationSet out = data;
  out.records.clear();
  for (const auto& r : data.records)
    if (std::find(ids.begin(), ids.end(), r.site_id) == ids.end()) out.records.push_back(r);
  return out;
}

std::array<double, 2> project_km(double lon, double lat, double ref_lon, double ref_lat) {
  constexpr double km_per_deg = 111.2;
  return {(lon - ref_lon) * km_per_deg * std::cos(ref_lat * kPi / 180.0), (lat - ref_lat) * km_per_deg};
}

void save_dataset(const StationSet& data, const std::filesystem::path& path) {
  std::ostringstream meta;
  write_metadata(metadata_of(data), meta);
  json header = json::parse(meta.str());
  header["T"] = data.T();
  const std::string h = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + tmp.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = h.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& r : data.records)
    out.write(reinterpret_cast<const char*>(r.temps.data()),
              static_cast<std::streamsize>(r.temps.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(data.radiation.data()),
            static_cast<std::streamsize>(data.radiation.size() * sizeof(double)));
  out.close();
  if (!out) throw ValidationError("write failed for " + tmp.string());
  std::filesystem::rename(tmp, path);
}

StationSet load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw ValidationError(path.string() + " is not a dataset file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(h);
  std::istringstream meta_in(header.dump());
  const auto meta = parse_metadata(meta_in);
  const auto T = header.at("T").get<std::size_t>();
  StationSet data;
  data.central_id = meta.central_id;
  data.central_lon = meta.central_lon;
  data.central_lat = meta.central_lat;
  data.days = meta.days;
  for (const auto& s : meta.sites) {
    StationRecord r{s.id, s.lon, s.lat, s.elev, Series(T)};
    in.read(reinterpret_cast<char*>(r.temps.data()), static_cast<std::streamsize>(T * sizeof(double)));
    data.records.push_back(std::move(r));
  }
  data.radiation.resize(T);
  in.read(reinterpret_cast<char*>(data.radiation.data()), static_cast<std::streamsize>(T * sizeof(double)));
  if (!in) throw ValidationError(path.string() + " is truncated");
  data.validate();
  return data;
}

}  // namespace evospec
