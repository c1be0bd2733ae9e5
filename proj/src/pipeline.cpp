#include "evospec/pipeline.hpp"

#include <algorithm>
#include <sstream>

namespace evospec {

namespace {

json input_entry(const fs::path& p) {
  if (!fs::exists(p)) throw ValidationError("missing input " + p.string());
  return {{"path", p.lexically_normal().generic_string()}, {"hash", file_hash(p)}};
}

fs::path manifest_path(const fs::path& dir) { return (dir.empty() ? fs::path(".") : dir) / "manifest.json"; }

// Adds (or replaces) one entry and rewrites the manifest atomically.
void record(const fs::path& dir, const std::string& key, const std::string& stage, const json& config,
            const std::vector<fs::path>& outputs, const json& extra = json::object()) {
  const auto mp = manifest_path(dir);
  json m = fs::exists(mp) ? read_json(mp) : json{{"entries", json::object()}};
  m["version"] = kVersion;
  json outs = json::object();
  for (const auto& o : outputs) outs[o.filename().generic_string()] = file_hash(o);
  json e{{"stage", stage}, {"config", config}, {"config_hash", config_hash(config)}, {"outputs", outs}};
  for (const auto& [k, v] : extra.items()) e[k] = v;
  m["entries"][key] = e;
  write_json(mp, m);
}

json stamped(json payload, const std::string& stage, const json& config) {
  payload["stage"] = stage;
  payload["version"] = kVersion;
  payload["config"] = config;
  payload["config_hash"] = config_hash(config);
  return payload;
}

FitData load_fit_data(const fs::path& data_path, const fs::path& trend_path) {
  const StationSet data = load_dataset(data_path);
  const TrendFit trend = trend_from_json(read_json(trend_path));
  if (trend.means.m_hat.size() != data.T()) throw ValidationError("trend length does not match the dataset");
  return {data, trend_residuals(data, trend)};
}

void check_alpha(double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
}

// Night blocks reuse the model's night weights in turn, day blocks its day weights.
Eigen::MatrixXd cycle_weights(const Eigen::MatrixXd& w, int B) {
  if (w.cols() == B) return w;
  std::vector<int> day, night;
  for (int b = 0; b < w.cols(); ++b) (BlockPartition::is_day(b) ? day : night).push_back(b);
  if (night.empty() || (day.empty() && B > 1)) throw ValidationError("model weights cannot be extended to the layout");
  Eigen::MatrixXd out(w.rows(), B);
  int nd = 0, nn = 0;
  for (int b = 0; b < B; ++b) {
    const int src = BlockPartition::is_day(b) ? day[nd++ % day.size()] : night[nn++ % night.size()];
    out.col(b) = w.col(src);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

}  // namespace

void run_ingest(const IngestConfig& cfg) {
  json config{{"csv", input_entry(cfg.csv)}, {"meta", input_entry(cfg.meta)}, {"holdout", cfg.holdout}};
  if (!cfg.holdout.empty() && !cfg.truth_out && !cfg.targets_out)
    throw ValidationError("holding out sites needs --truth-out or --targets-out");
  StationSet data = fill_missing(load_station_csv(cfg.csv, cfg.meta));
  std::vector<fs::path> outputs;
  if (!cfg.holdout.empty()) {
    const StationSet held = select_sites(data, cfg.holdout);
    data = drop_sites(data, cfg.holdout);
    if (data.n() == 0) throw ValidationError("every site is held out");
    if (cfg.truth_out) {
      std::vector<Series> s;
      for (const auto& r : held.records) s.push_back(r.temps);
      write_file_atomic(*cfg.truth_out, series_table_csv(cfg.holdout, s));
      outputs.push_back(*cfg.truth_out);
    }
    if (cfg.targets_out) {
      std::vector<TargetSite> t;
      for (const auto& r : held.records) t.push_back({r.site_id, r.lon, r.lat, r.elev});
      write_json(*cfg.targets_out, stamped(to_json(t), "ingest", config));
      outputs.push_back(*cfg.targets_out);
    }
  }
  save_dataset(data, cfg.out);
  outputs.insert(outputs.begin(), cfg.out);
  record(cfg.out.parent_path(), cfg.out.filename().string(), "ingest", config, outputs,
         {{"sites", data.n()}, {"T", data.T()}, {"gaps_filled", true}});
}

void run_fit_trend(const TrendConfig& cfg) {
  json config{{"data", input_entry(cfg.data)}, {"jump_day", cfg.jump_day}, {"fit_jump", cfg.fit_jump},
              {"threshold", cfg.threshold}};
  if (cfg.bursts) config["bursts"] = input_entry(*cfg.bursts);
  const StationSet data = load_dataset(cfg.data);
  std::vector<BurstInterval> bursts;
  if (cfg.bursts) bursts = bursts_from_json(read_json(*cfg.bursts));
  for (const auto& b : bursts) {
    if (!data.find(b.site)) throw ValidationError("burst names unknown site '" + b.site + "'");
    if (b.end >= data.T()) throw ValidationError("burst interval runs past the record for site " + b.site);
  }
  if (cfg.fit_jump && (cfg.jump_day < 1 || static_cast<std::size_t>(cfg.jump_day) * kMinutesPerDay > data.T()))
    throw ValidationError("jump day " + std::to_string(cfg.jump_day) + " is outside the record");
  TrendOptions opt;
  opt.jump_day = cfg.jump_day;
  opt.fit_jump = cfg.fit_jump;
  opt.threshold = cfg.threshold;
  opt.workers = cfg.workers;
  const TrendFit fit = fit_trend(data, bursts, opt);
  write_json(cfg.out, stamped(to_json(fit), "fit-trend", config));
  record(cfg.out.parent_path(), cfg.out.filename().string(), "fit-trend", config, {cfg.out});
}

void run_fit(const FitConfig& cfg) {
  check_alpha(cfg.alpha);
  json config{{"data", input_entry(cfg.data)}, {"trend", input_entry(cfg.trend)},
              {"offsets", {cfg.sunrise, cfg.sunset}}, {"alpha", cfg.alpha},
              {"variant", variant_name(cfg.variant)}, {"hessian", cfg.hessian},
              {"max_iter", cfg.max_iter}, {"grad_tol", cfg.grad_tol}};
  const FitData fd = load_fit_data(cfg.data, cfg.trend);
  FitOptions opt;
  opt.hessian = cfg.hessian && cfg.variant == Variant::full;
  opt.max_iter = cfg.max_iter;
  opt.grad_tol = cfg.grad_tol;
  opt.lik.workers = cfg.workers;
  const FitResult fit = cfg.variant == Variant::full
                            ? fit_model(fd, cfg.sunrise, cfg.sunset, cfg.alpha, opt)
                            : fit_variant(fd, cfg.variant, cfg.sunrise, cfg.sunset, opt, cfg.alpha);
  json payload = to_json(fit);
  payload["loglik"] = -fit.negloglik;
  write_json(cfg.out, stamped(payload, "fit", config));
  record(cfg.out.parent_path(), cfg.out.filename().string(), "fit", config, {cfg.out},
         {{"converged", fit.convergence.converged}});
}

void run_gridsearch(const GridConfig& cfg) {
  const json grid = read_json(cfg.grid);
  json config{{"data", input_entry(cfg.data)}, {"trend", input_entry(cfg.trend)}, {"grid", grid},
              {"refine", cfg.refine}, {"max_iter", cfg.max_iter}, {"grad_tol", cfg.grad_tol}};
  const FitData fd = load_fit_data(cfg.data, cfg.trend);
  FitOptions opt;
  opt.max_iter = cfg.max_iter;
  opt.grad_tol = cfg.grad_tol;
  opt.workers = cfg.parallel;
  auto summary_path = cfg.out;
  summary_path.replace_extension(".json");
  if (summary_path == cfg.out) summary_path += ".summary.json";
  json summary;

  try {
    if (grid.contains("alphas")) {
      const auto alphas = grid.at("alphas").get<std::vector<double>>();
      const auto off = grid.at("offsets").get<std::array<double, 2>>();
      for (double a : alphas) check_alpha(a);
      const AlphaCurve curve = grid_search_alpha(fd, alphas, off[0], off[1], opt);
      write_file_atomic(cfg.out, alpha_curve_csv(curve));
      summary = {{"mode", "alpha"}, {"best_alpha", curve.best_alpha},
                 {"best_negloglik", *curve.negloglik[curve.best]}, {"offsets", off}};
    } else {
      std::vector<std::pair<double, double>> cells;
      if (grid.contains("pairs")) {
        for (const auto& p : grid.at("pairs")) cells.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      } else {
        cells = offset_grid(grid.at("sunrise").get<std::vector<double>>(), grid.at("sunset").get<std::vector<double>>());
      }
      const double alpha = grid.value("alpha", 1.0);
      check_alpha(alpha);
      const GridSearchTable table = grid_search_offsets(fd, cells, alpha, opt);
      write_file_atomic(cfg.out, grid_table_csv(table));
      const auto& b = table.rows[table.best];
      summary = {{"mode", "offsets"}, {"alpha", alpha},
                 {"best", {{"sunrise", b.sunrise}, {"sunset", b.sunset}, {"negloglik", *b.negloglik}}}};
      json failed = json::array();
      for (const auto& r : table.rows)
        if (!r.negloglik) failed.push_back({{"sunrise", r.sunrise}, {"sunset", r.sunset}, {"error", r.error}});
      summary["failed_cells"] = failed;
      if (cfg.refine) {
        const RefinedOffsets r = refine_quadratic(table);
        summary["refined"] = {{"sunrise", r.sunrise}, {"sunset", r.sunset}, {"fallback", r.fallback},
                              {"reason", r.reason}};
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("grid file: ") + e.what());
  }
  write_json(summary_path, stamped(summary, "gridsearch", config));
  record(cfg.out.parent_path(), cfg.out.filename().string(), "gridsearch", config, {cfg.out, summary_path});
}

void run_simulate(const SimulateConfig& cfg) {
  if (!cfg.seed) throw ValidationError("simulate needs --seed");
  if (cfg.n_sims < 2) throw ValidationError("need at least 2 simulations for bands");
  if (!(cfg.level > 0.0 && cfg.level <= 1.0)) throw ValidationError("band level must lie in (0, 1]");
  json config{{"model", input_entry(cfg.model)}, {"trend", input_entry(cfg.trend)},
              {"data", input_entry(cfg.data)}, {"targets", input_entry(cfg.targets)},
              {"n_sims", cfg.n_sims}, {"seed", *cfg.seed}, {"level", cfg.level},
              {"weight_scale", cfg.weight_scale}, {"allow_unit_alpha", cfg.allow_unit_alpha},
              {"perturb", cfg.perturb}};
  const FitResult fit = fit_from_json(read_json(cfg.model));
  const TrendFit trend = trend_from_json(read_json(cfg.trend));
  const StationSet data = load_dataset(cfg.data);
  const auto targets = targets_from_json(read_json(cfg.targets));
  if (trend.means.m_hat.size() != data.T()) throw ValidationError("trend length does not match the dataset");

  SimulationOptions opt;
  opt.n_sims = cfg.n_sims;
  opt.seed = *cfg.seed;
  opt.level = cfg.level;
  opt.weight_scale = cfg.weight_scale;
  opt.allow_unit_alpha = cfg.allow_unit_alpha;
  opt.perturb = cfg.perturb;
  opt.workers = cfg.parallel;
  const ConditionalEnsemble ens = simulate_conditional(fit, trend, data, targets, opt);

  std::vector<fs::path> outputs;
  json tj = json::array();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    const auto draws_path = cfg.out_dir / (t.id + ".csv");
    const auto bands_path = cfg.out_dir / (t.id + "_bands.csv");
    write_file_atomic(draws_path, ensemble_csv(ens.draws[i]));
    write_file_atomic(bands_path, bands_csv(ens.bands[i]));
    outputs.push_back(draws_path);
    outputs.push_back(bands_path);
    tj.push_back({{"id", t.id}, {"lon", t.lon}, {"lat", t.lat}, {"elev", t.elev},
                  {"phase", ens.schedules[i].phase}, {"changepoints", ens.schedules[i].partition.changepoints}});
  }
  json weights = json::array();
  for (const auto& w : ens.weights) {
    json rows = json::array();
    for (Eigen::Index k = 0; k < w.rows(); ++k) {
      std::vector<double> row(w.cols());
      for (Eigen::Index b = 0; b < w.cols(); ++b) row[b] = w(k, b);
      rows.push_back(row);
    }
    weights.push_back(rows);
  }
  const json payload{{"targets", tj}, {"seeds", ens.seeds}, {"weights", weights}, {"level", cfg.level},
                     {"n_sims", cfg.n_sims}, {"alpha", fit.evo.alpha}};
  const auto ens_json = cfg.out_dir / "ensemble.json";
  write_json(ens_json, stamped(payload, "simulate", config));
  outputs.insert(outputs.begin(), ens_json);
  record(cfg.out_dir, "ensemble.json", "simulate", config, outputs, {{"seed", *cfg.seed}});
}

void run_evaluate(const EvaluateConfig& cfg) {
  const auto ens_json = cfg.ens / "ensemble.json";
  json config{{"ensemble", input_entry(ens_json)}, {"truth", input_entry(cfg.truth)}};
  const json ens = read_json(ens_json);
  const SeriesTable truth = parse_series_table_csv(read_file(cfg.truth));
  json sites = json::object();
  double hits = 0.0, total = 0.0;
  try {
    for (const auto& t : ens.at("targets")) {
      const auto id = t.at("id").get<std::string>();
      const auto it = std::find(truth.ids.begin(), truth.ids.end(), id);
      if (it == truth.ids.end()) throw ValidationError("truth file has no column for target " + id);
      const auto bands_path = cfg.ens / (id + "_bands.csv");
      config["bands_" + id] = input_entry(bands_path);
      const Bands b = parse_bands_csv(read_file(bands_path));
      const Series& y = truth.series[static_cast<std::size_t>(it - truth.ids.begin())];
      if (y.size() != b.lower.size()) throw ValidationError("truth and bands differ in length for " + id);
      BlockPartition part;
      part.changepoints = t.at("changepoints").get<std::vector<double>>();
      const CoverageReport r = evaluate_coverage(b, y, part);
      sites[id] = to_json(r);
      hits += r.coverage * static_cast<double>(y.size());
      total += static_cast<double>(y.size());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("ensemble file: ") + e.what());
  }
  const json payload{{"sites", sites}, {"pooled_coverage", total > 0 ? hits / total : 0.0},
                     {"level", ens.value("level", 0.9)}};
  write_json(cfg.out, stamped(payload, "evaluate", config));
  record(cfg.out.parent_path(), cfg.out.filename().string(), "evaluate", config, {cfg.out});
}

void run_synth(const SynthConfig& cfg) {
  if (!cfg.seed) throw ValidationError("synth needs --seed");
  if (cfg.T < 2) throw ValidationError("synth needs T >= 2");
  json config{{"model", input_entry(cfg.model)}, {"sites", input_entry(cfg.sites)}, {"T", cfg.T},
              {"seed", *cfg.seed}};
  if (cfg.trend) config["trend"] = input_entry(*cfg.trend);
  FitResult fit = fit_from_json(read_json(cfg.model));
  const json lj = read_json(cfg.sites);
  std::vector<SiteLayout> layout;
  std::size_t central = 0;
  double sunrise = 420.0, sunset = 1140.0, peak = 900.0;
  try {
    for (const auto& s : lj.at("sites"))
      layout.push_back({s.at("id").get<std::string>(), s.at("lon").get<double>(), s.at("lat").get<double>(),
                        s.value("elev", 0.0)});
    if (layout.empty()) throw ValidationError("sites file lists no sites");
    if (lj.contains("central")) {
      const auto c = lj.at("central").is_object() ? lj.at("central").at("id").get<std::string>()
                                                  : lj.at("central").get<std::string>();
      const auto it = std::find_if(layout.begin(), layout.end(), [&](const SiteLayout& s) { return s.id == c; });
      if (it == layout.end()) throw ValidationError("central site '" + c + "' is not in the sites list");
      central = static_cast<std::size_t>(it - layout.begin());
    }
    sunrise = lj.value("sunrise", sunrise);
    sunset = lj.value("sunset", sunset);
    peak = lj.value("peak_radiation", peak);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("sites file: ") + e.what());
  }
  StationSet st = synthetic_layout(layout, central, cfg.T, sunrise, sunset, peak);
  const int B = block_partition(st.days, st.T(), fit.evo.sunrise_offset, fit.evo.sunset_offset, 0.0).blocks();
  fit.evo.weights = cycle_weights(fit.evo.weights, B);

  TrendFit trend;
  trend.means.m_hat.assign(cfg.T, 0.0);
  if (cfg.trend) {
    const TrendFit src = trend_from_json(read_json(*cfg.trend));
    for (std::size_t t = 0; t < cfg.T && !src.means.m_hat.empty(); ++t)
      trend.means.m_hat[t] = src.means.m_hat[t % src.means.m_hat.size()];
    for (const auto& s : layout) {
      trend.means.site_ids.push_back(s.id);
      double v = 0.0;
      for (std::size_t i = 0; i < src.means.site_ids.size(); ++i)
        if (src.means.site_ids[i] == s.id) v = src.means.s[i];
      trend.means.s.push_back(v);
    }
  } else {
    for (const auto& s : layout) {
      trend.means.site_ids.push_back(s.id);
      trend.means.s.push_back(0.0);
    }
  }
  std::mt19937_64 rng(stream_seed(*cfg.seed, 0));
  const StationSet out = simulate_unconditional(fit.evo, fit.coh, trend, st, rng);

  std::ostringstream csv, meta;
  write_station_csv(out, csv);
  write_metadata(metadata_of(out), meta);
  auto meta_path = cfg.out;
  meta_path.replace_extension(".meta.json");
  write_file_atomic(cfg.out, csv.str());
  write_file_atomic(meta_path, meta.str());
  record(cfg.out.parent_path(), cfg.out.filename().string(), "synth", config, {cfg.out, meta_path},
         {{"seed", *cfg.seed}, {"sites", join([&] {
            std::vector<std::string> ids;
            for (const auto& s : layout) ids.push_back(s.id);
            return ids;
          }())}});
}

VerifyReport verify_manifest(const fs::path& manifest) {
  VerifyReport rep;
  const json m = read_json(manifest);
  const fs::path dir = manifest.parent_path();
  if (!m.contains("entries") || !m.at("entries").is_object()) throw ValidationError("manifest has no entries");
  for (const auto& [key, e] : m.at("entries").items()) {
    ++rep.checked;
    const std::string h = e.value("config_hash", std::string());
    if (!e.contains("config") || config_hash(e.at("config")) != h)
      rep.problems.push_back(key + ": config hash does not match its config");
    const json outputs = e.value("outputs", json::object());
    for (const auto& [name, fh] : outputs.items()) {
      const fs::path p = dir / name;
      if (!fs::exists(p)) {
        rep.problems.push_back(key + ": output " + name + " is missing");
        continue;
      }
      if (file_hash(p) != fh.get<std::string>()) rep.problems.push_back(key + ": output " + name + " changed");
      if (p.extension() == ".json") {
        const json a = read_json(p);
        if (a.contains("config_hash")) {
          if (a.at("config_hash") != h) rep.problems.push_back(key + ": " + name + " embeds a different config hash");
          if (!a.contains("config") || config_hash(a.at("config")) != a.at("config_hash").get<std::string>())
            rep.problems.push_back(key + ": " + name + " config hash does not match its embedded config");
        }
      }
    }
    if (e.contains("config"))
      for (const auto& [name, v] : e.at("config").items()) {
        if (!v.is_object() || !v.contains("path") || !v.contains("hash")) continue;
        const fs::path p = v.at("path").get<std::string>();
        if (fs::exists(p) && file_hash(p) != v.at("hash").get<std::string>())
          rep.problems.push_back(key + ": input " + p.generic_string() + " changed since the run");
      }
  }
  return rep;
}

RunConfig parse_run_config(const json& j, const fs::path& base) {
  auto path = [&](const std::string& k) {
    const fs::path p = j.at(k).get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  try {
    RunConfig c;
    c.workdir = path("workdir");
    c.csv = path("csv");
    c.meta = path("meta");
    c.holdout = j.value("holdout", std::vector<std::string>{});
    if (j.contains("bursts")) c.bursts = path("bursts");
    c.jump_day = j.value("jump_day", 5);
    c.fit_jump = j.value("fit_jump", true);
    if (j.contains("offsets")) {
      const auto o = j.at("offsets").get<std::array<double, 2>>();
      c.sunrise = o[0];
      c.sunset = o[1];
    }
    if (j.contains("offset_grid")) {
      c.sunrise_grid = j.at("offset_grid").at("sunrise").get<std::vector<double>>();
      c.sunset_grid = j.at("offset_grid").at("sunset").get<std::vector<double>>();
    }
    c.refine = j.value("refine", false);
    c.alpha = j.value("alpha", 1.0);
    c.alpha_grid = j.value("alpha_grid", std::vector<double>{});
    c.variant = parse_variant(j.value("variant", std::string("full")));
    c.simulate = j.value("simulate", true);
    c.n_sims = j.value("n_sims", 99);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.level = j.value("level", 0.9);
    c.allow_unit_alpha = j.value("allow_unit_alpha", false);
    c.parallel = j.value("parallel", 1u);
    if (c.simulate && !c.seed) throw ValidationError("run config: seed is required when simulating");
    if (c.simulate && c.holdout.empty()) throw ValidationError("run config: simulation needs held-out sites");
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
}

namespace {

template <class F>
void stage(const std::string& name, F&& f) {
  try {
    f();
  } catch (const NumericalError& e) {
    throw StageError(name, e.what(), true);
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), false);
  }
}

}  // namespace

void run_pipeline(const RunConfig& cfg) {
  const fs::path w = cfg.workdir;
  stage("validate", [&] {
    for (const auto& p : {cfg.csv, cfg.meta})
      if (!fs::exists(p)) throw ValidationError("missing input " + p.string());
    if (cfg.bursts && !fs::exists(*cfg.bursts)) throw ValidationError("missing input " + cfg.bursts->string());
    fs::create_directories(w);
  });
  stage("ingest", [&] {
    IngestConfig c{cfg.csv, cfg.meta, w / "dataset.bin", cfg.holdout, std::nullopt, std::nullopt};
    if (!cfg.holdout.empty()) {
      c.truth_out = w / "held_out.csv";
      c.targets_out = w / "targets.json";
    }
    run_ingest(c);
  });
  stage("fit-trend", [&] {
    TrendConfig c;
    c.data = w / "dataset.bin";
    c.out = w / "trend.json";
    c.bursts = cfg.bursts;
    c.jump_day = cfg.jump_day;
    c.fit_jump = cfg.fit_jump;
    c.workers = cfg.parallel;
    run_fit_trend(c);
  });
  double sunrise = cfg.sunrise, sunset = cfg.sunset, alpha = cfg.alpha;
  if (!cfg.sunrise_grid.empty() && !cfg.sunset_grid.empty()) {
    stage("gridsearch", [&] {
      write_json(w / "offset_grid.json", {{"sunrise", cfg.sunrise_grid}, {"sunset", cfg.sunset_grid}, {"alpha", alpha}});
      run_gridsearch({w / "dataset.bin", w / "trend.json", w / "offset_grid.json", w / "offsets.csv", cfg.refine,
                      200, 1e-4, cfg.parallel});
      const json s = read_json(w / "offsets.json");
      const json& best = s.contains("refined") ? s.at("refined") : s.at("best");
      sunrise = best.at("sunrise").get<double>();
      sunset = best.at("sunset").get<double>();
    });
  }
  if (!cfg.alpha_grid.empty()) {
    stage("gridsearch-alpha", [&] {
      write_json(w / "alpha_grid.json", {{"alphas", cfg.alpha_grid}, {"offsets", {sunrise, sunset}}});
      run_gridsearch({w / "dataset.bin", w / "trend.json", w / "alpha_grid.json", w / "alpha.csv", false, 200,
                      1e-4, cfg.parallel});
      alpha = read_json(w / "alpha.json").at("best_alpha").get<double>();
    });
  }
  stage("fit", [&] {
    FitConfig c;
    c.data = w / "dataset.bin";
    c.trend = w / "trend.json";
    c.out = w / "model.json";
    c.sunrise = sunrise;
    c.sunset = sunset;
    c.alpha = alpha;
    c.variant = cfg.variant;
    c.workers = cfg.parallel;
    run_fit(c);
  });
  if (!cfg.simulate) return;
  stage("simulate", [&] {
    SimulateConfig c;
    c.model = w / "model.json";
    c.trend = w / "trend.json";
    c.data = w / "dataset.bin";
    c.targets = w / "targets.json";
    c.out_dir = w / "ens";
    c.n_sims = cfg.n_sims;
    c.seed = cfg.seed;
    c.level = cfg.level;
    c.allow_unit_alpha = cfg.allow_unit_alpha;
    c.parallel = cfg.parallel;
    run_simulate(c);
  });
  stage("evaluate", [&] { run_evaluate({w / "ens", w / "held_out.csv", w / "report.json"}); });
}

}  // namespace evospec
