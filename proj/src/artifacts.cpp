#include "evospec/artifacts.hpp"

#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace evospec {

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const json& config) { return fnv1a_hex(config.dump()); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string file_hash(const std::filesystem::path& path) { return fnv1a_hex(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd to_mat(const json& j) {
  if (j.empty()) return {};
  const auto rows = j.size(), cols = j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw ValidationError("ragged matrix in artifact");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

// Guards every artifact parse so malformed files surface as validation errors.
template <class F>
auto parse_guard(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json to_json(const TrendFit& trend) {
  json j;
  j["m_hat"] = trend.means.m_hat;
  j["site_ids"] = trend.means.site_ids;
  j["s"] = trend.means.s;
  j["grand_mean"] = trend.means.grand_mean;
  j["has_jump"] = trend.has_jump;
  const auto& J = trend.jump;
  json jj;
  jj["jump_day"] = J.window.jump_day;
  jj["beta"] = J.beta;
  jj["nu"] = J.nu;
  jj["b1"] = J.b1;
  jj["b1_held"] = J.b1_held;
  jj["b2_slope"] = J.b2_slope;
  jj["b2_anchor_value"] = J.b2_anchor_value;
  jj["sites"] = json::array();
  for (const auto& p : J.sites)
    jj["sites"].push_back({{"id", p.id}, {"tau", p.tau}, {"D", p.D}, {"lambda", p.lambda}, {"flagged", p.flagged}});
  j["jump"] = jj;
  j["bursts"] = to_json(trend.bursts);
  return j;
}

TrendFit trend_from_json(const json& j) {
  return parse_guard("trend artifact", [&] {
    TrendFit t;
    t.means.m_hat = j.at("m_hat").get<Series>();
    t.means.site_ids = j.at("site_ids").get<std::vector<std::string>>();
    t.means.s = j.at("s").get<std::vector<double>>();
    t.means.grand_mean = j.at("grand_mean").get<double>();
    t.has_jump = j.at("has_jump").get<bool>();
    const auto& jj = j.at("jump");
    auto& J = t.jump;
    J.window.jump_day = jj.at("jump_day").get<int>();
    J.beta = jj.at("beta").get<double>();
    J.nu = jj.at("nu").get<std::array<double, 3>>();
    J.b1 = jj.at("b1").get<Series>();
    J.b1_held = jj.at("b1_held").get<bool>();
    J.b2_slope = jj.at("b2_slope").get<double>();
    J.b2_anchor_value = jj.at("b2_anchor_value").get<double>();
    for (const auto& p : jj.at("sites"))
      J.sites.push_back({p.at("id").get<std::string>(), p.at("tau").get<double>(), p.at("D").get<double>(),
                         p.at("lambda").get<double>(), p.at("flagged").get<bool>()});
    t.bursts = bursts_from_json(j.at("bursts"));
    if (t.means.s.size() != t.means.site_ids.size()) throw ValidationError("trend artifact: s and site_ids differ");
    return t;
  });
}

json to_json(const EvoSpectrumModel& evo, const CoherenceModel& coh) {
  json j;
  j["alpha"] = evo.alpha;
  j["a0"] = evo.a0;
  j["a1"] = evo.a1;
  j["offsets"] = {{"sunrise", evo.sunrise_offset}, {"sunset", evo.sunset_offset}};
  json reg;
  reg["knots"] = regime_basis().raw().knots();
  reg["coeffs"] = json::array();
  for (const auto& r : evo.regimes) reg["coeffs"].push_back(vec(r.coeffs));
  j["regimes"] = reg;
  j["weights"] = mat(evo.weights);
  j["clock"] = {{"theta", evo.clock.theta}, {"phi", evo.clock.phi}};
  j["coherence"] = {{"gamma_coeffs", vec(coh.gamma_coeffs)}, {"omega0_cpd", coh.omega0_cpd}};
  return j;
}

json to_json(const FitResult& fit) {
  json j = to_json(fit.evo, fit.coh);
  j["variant"] = variant_name(fit.variant);
  j["negloglik"] = fit.negloglik;
  j["hessian"] = mat(fit.hessian);
  const auto& c = fit.convergence;
  j["convergence"] = {{"iterations", c.iterations}, {"evaluations", c.evaluations}, {"grad_norm", c.grad_norm},
                      {"converged", c.converged}, {"stalled", c.stalled}, {"status", c.status}};
  j["prelim"] = {{"a0", fit.prelim.a0}, {"a1", fit.prelim.a1}, {"a1_unidentified", fit.prelim.a1_unidentified}};
  return j;
}

FitResult fit_from_json(const json& j) {
  return parse_guard("model artifact", [&] {
    FitResult f;
    f.variant = parse_variant(j.value("variant", std::string("full")));
    auto& e = f.evo;
    e.alpha = j.at("alpha").get<double>();
    e.a0 = j.at("a0").get<double>();
    e.a1 = j.at("a1").get<double>();
    e.sunrise_offset = j.at("offsets").at("sunrise").get<double>();
    e.sunset_offset = j.at("offsets").at("sunset").get<double>();
    for (const auto& c : j.at("regimes").at("coeffs")) {
      Regime r;
      r.coeffs = to_vec(c);
      if (r.coeffs.size() != kRegimeBasisSize) throw ValidationError("model artifact: regime needs 15 coefficients");
      e.regimes.push_back(r);
    }
    e.weights = to_mat(j.at("weights"));
    if (e.weights.rows() != e.K()) throw ValidationError("model artifact: weights rows must match the regimes");
    e.clock.theta = j.at("clock").at("theta").get<double>();
    e.clock.phi = j.at("clock").at("phi").get<std::array<double, 2>>();
    f.coh.clock = e.clock;
    f.coh.gamma_coeffs = to_vec(j.at("coherence").at("gamma_coeffs"));
    if (f.coh.gamma_coeffs.size() != kGammaBasisSize)
      throw ValidationError("model artifact: coherence needs 5 coefficients");
    f.coh.omega0_cpd = j.at("coherence").value("omega0_cpd", kCoherenceCutoffCpd);
    if (f.coh.omega0_cpd != kCoherenceCutoffCpd) throw ValidationError("model artifact: omega0 must be 48 cpd");
    f.negloglik = j.value("negloglik", 0.0);
    if (j.contains("hessian")) f.hessian = to_mat(j.at("hessian"));
    if (j.contains("convergence")) {
      const auto& c = j.at("convergence");
      f.convergence = {c.value("iterations", 0), c.value("evaluations", 0), c.value("grad_norm", 0.0),
                       c.value("converged", false), c.value("stalled", false), c.value("status", std::string())};
    }
    if (j.contains("prelim")) {
      const auto& p = j.at("prelim");
      f.prelim = {p.value("a0", 0.0), p.value("a1", 0.0), p.value("a1_unidentified", false)};
    }
    if ((e.weights.array() <= 0).any() || e.a0 <= 0 || e.a1 < 0)
      throw ValidationError("model artifact: weights and a0 must be positive, a1 nonnegative");
    return f;
  });
}

std::vector<BurstInterval> bursts_from_json(const json& j) {
  return parse_guard("bursts", [&] {
    std::vector<BurstInterval> out;
    const json& arr = j.is_object() ? j.at("bursts") : j;
    for (const auto& b : arr) {
      const auto start = b.at("start").get<long>(), end = b.at("end").get<long>();
      if (start < 1 || end < start) throw ValidationError("bursts: need 1 <= start <= end (1-based minutes)");
      out.push_back({b.at("site").get<std::string>(), static_cast<std::size_t>(start - 1),
                     static_cast<std::size_t>(end - 1)});
    }
    return out;
  });
}

json to_json(const std::vector<BurstInterval>& bursts) {
  json arr = json::array();
  for (const auto& b : bursts) arr.push_back({{"site", b.site}, {"start", b.start + 1}, {"end", b.end + 1}});
  return arr;
}

std::vector<TargetSite> targets_from_json(const json& j) {
  return parse_guard("targets", [&] {
    std::vector<TargetSite> out;
    const json& arr = j.is_object() ? j.at("targets") : j;
    for (const auto& t : arr)
      out.push_back({t.at("id").get<std::string>(), t.at("lon").get<double>(), t.at("lat").get<double>(),
                     t.value("elev", 0.0)});
    if (out.empty()) throw ValidationError("targets: list is empty");
    return out;
  });
}

json to_json(const std::vector<TargetSite>& targets) {
  json arr = json::array();
  for (const auto& t : targets) arr.push_back({{"id", t.id}, {"lon", t.lon}, {"lat", t.lat}, {"elev", t.elev}});
  return {{"targets", arr}};
}

json to_json(const CoverageReport& r) {
  auto w = [](const WidthStats& s) { return json{{"mean", s.mean}, {"sd", s.sd}, {"minutes", s.count}}; };
  return {{"coverage", r.coverage}, {"daytime", w(r.day)}, {"nighttime", w(r.night)}, {"overall", w(r.overall)}};
}

namespace {

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : ""; }

std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string c;
    std::istringstream ls(line);
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_num(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string(what) + ": bad number '" + s + "'");
  }
}

}  // namespace

std::string grid_table_csv(const GridSearchTable& table) {
  std::string out = "sunrise,sunset,negloglik,delta_thousands\n";
  for (const auto& r : table.rows) {
    out += format_double(r.sunrise) + "," + format_double(r.sunset) + ",";
    out += r.negloglik ? format_double(*r.negloglik) + "," + format_double(r.delta_thousands) : ",";
    out += "\n";
  }
  return out;
}

GridSearchTable parse_grid_table_csv(const std::string& text) {
  const auto rows = split_csv(text);
  if (rows.empty() || rows[0].size() != 4 || rows[0][0] != "sunrise")
    throw ValidationError("grid table: expected header sunrise,sunset,negloglik,delta_thousands");
  GridSearchTable t;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 4) throw ValidationError("grid table: line " + std::to_string(i + 1) + " needs 4 cells");
    GridRow r;
    r.sunrise = parse_num(rows[i][0], "grid table");
    r.sunset = parse_num(rows[i][1], "grid table");
    if (!rows[i][2].empty()) r.negloglik = parse_num(rows[i][2], "grid table");
    t.rows.push_back(r);
  }
  finalize_table(t);
  return t;
}

std::string alpha_curve_csv(const AlphaCurve& curve) {
  std::string out = "alpha,negloglik,delta\n";
  for (std::size_t i = 0; i < curve.alphas.size(); ++i)
    out += format_double(curve.alphas[i]) + "," + (curve.negloglik[i] ? format_double(*curve.negloglik[i]) : "") +
           "," + cell(curve.delta[i]) + "\n";
  return out;
}

std::string ensemble_csv(const std::vector<Series>& draws) {
  std::ostringstream out;
  out << "minute";
  for (std::size_t d = 0; d < draws.size(); ++d) out << ",draw_" << d + 1;
  out << "\n";
  const std::size_t T = draws.empty() ? 0 : draws.front().size();
  for (std::size_t t = 0; t < T; ++t) {
    out << t + 1;
    for (const auto& s : draws) out << ',' << format_double(s[t]);
    out << '\n';
  }
  return out.str();
}

std::vector<Series> parse_ensemble_csv(const std::string& text) {
  const auto rows = split_csv(text);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "minute") throw ValidationError("ensemble: bad header");
  const std::size_t S = rows[0].size() - 1;
  std::vector<Series> draws(S);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != S + 1) throw ValidationError("ensemble: line " + std::to_string(i + 1) + " is ragged");
    for (std::size_t d = 0; d < S; ++d) draws[d].push_back(parse_num(rows[i][d + 1], "ensemble"));
  }
  return draws;
}

std::string bands_csv(const Bands& b) {
  std::ostringstream out;
  out << "minute,lower,upper\n";
  for (std::size_t t = 0; t < b.lower.size(); ++t)
    out << t + 1 << ',' << format_double(b.lower[t]) << ',' << format_double(b.upper[t]) << '\n';
  return out.str();
}

Bands parse_bands_csv(const std::string& text) {
  const auto rows = split_csv(text);
  if (rows.empty() || rows[0].size() != 3 || rows[0][0] != "minute") throw ValidationError("bands: bad header");
  Bands b;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw ValidationError("bands: line " + std::to_string(i + 1) + " needs 3 cells");
    b.lower.push_back(parse_num(rows[i][1], "bands"));
    b.upper.push_back(parse_num(rows[i][2], "bands"));
  }
  return b;
}

std::string series_table_csv(const std::vector<std::string>& ids, const std::vector<Series>& series) {
  if (ids.size() != series.size()) throw ValidationError("series table: one id per series");
  std::ostringstream out;
  out << "minute";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  const std::size_t T = series.empty() ? 0 : series.front().size();
  for (std::size_t t = 0; t < T; ++t) {
    out << t + 1;
    for (const auto& s : series) out << ',' << format_double(s.at(t));
    out << '\n';
  }
  return out.str();
}

SeriesTable parse_series_table_csv(const std::string& text) {
  const auto rows = split_csv(text);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "minute") throw ValidationError("series table: bad header");
  SeriesTable tab;
  tab.ids.assign(rows[0].begin() + 1, rows[0].end());
  tab.series.resize(tab.ids.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != tab.ids.size() + 1)
      throw ValidationError("series table: line " + std::to_string(i + 1) + " is ragged");
    for (std::size_t k = 0; k < tab.ids.size(); ++k) tab.series[k].push_back(parse_num(rows[i][k + 1], "series table"));
  }
  return tab;
}

}  // namespace evospec
