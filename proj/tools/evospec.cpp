// evospec command-line driver. Exit codes: 0 ok, 2 validation, 3 numerical.
#include <CLI11.hpp>

#include <iostream>

#include "evospec/pipeline.hpp"

using namespace evospec;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::pair<double, double> parse_offsets(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ValidationError("--offsets expects SUNRISE,SUNSET (minutes)");
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ValidationError("--offsets expects two numbers, got '" + s + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time temperature model: fit, grid search and conditional simulation"};
  app.set_version_flag("--version", std::string("evospec ") + kVersion);
  app.require_subcommand(1);

  IngestConfig ingest;
  std::string holdout;
  auto* c_ingest = app.add_subcommand("ingest", "Load station CSV + metadata, fill gaps, write a dataset");
  c_ingest->add_option("--csv", ingest.csv, "Station CSV (minute,<site ids>,radiation)")->required();
  c_ingest->add_option("--meta", ingest.meta, "Sidecar metadata JSON")->required();
  c_ingest->add_option("--out", ingest.out, "Dataset file to write")->required();
  c_ingest->add_option("--holdout", holdout, "Comma-separated site ids to withhold");
  c_ingest->add_option("--truth-out", ingest.truth_out, "CSV for the withheld temperatures");
  c_ingest->add_option("--targets-out", ingest.targets_out, "Targets JSON for the withheld sites");

  TrendConfig trend;
  auto* c_trend = app.add_subcommand("fit-trend", "Temporal/spatial means and the cold-front jump");
  c_trend->add_option("--data", trend.data, "Dataset file")->required();
  c_trend->add_option("--bursts", trend.bursts, "Burst intervals JSON (1-based minutes)");
  c_trend->add_option("--jump-day", trend.jump_day, "1-based day containing the jump")->capture_default_str();
  bool no_jump = false;
  c_trend->add_flag("--no-jump", no_jump, "Skip the jump fit");
  c_trend->add_option("--threshold", trend.threshold, "First-difference threshold for jump detection")
      ->capture_default_str();
  c_trend->add_option("--parallel", trend.workers, "Worker threads")->capture_default_str();
  c_trend->add_option("--out", trend.out, "Trend JSON to write")->required();

  FitConfig fit;
  std::string fit_offsets, fit_variant = "full";
  bool no_hessian = false;
  auto* c_fit = app.add_subcommand("fit", "Estimate regimes and maximize the likelihood");
  c_fit->add_option("--data", fit.data, "Dataset file")->required();
  c_fit->add_option("--trend", fit.trend, "Trend JSON")->required();
  c_fit->add_option("--offsets", fit_offsets, "SUNRISE,SUNSET offsets in minutes")->required();
  c_fit->add_option("--alpha", fit.alpha, "Partial differencing parameter")->capture_default_str();
  c_fit->add_option("--variant", fit_variant, "full, stationary, daynight or radiation")->capture_default_str();
  c_fit->add_flag("--no-hessian", no_hessian, "Skip the weight Hessian");
  c_fit->add_option("--max-iter", fit.max_iter, "Quasi-Newton iteration limit")->capture_default_str();
  c_fit->add_option("--grad-tol", fit.grad_tol, "Gradient tolerance relative to 1+|loglik|")->capture_default_str();
  c_fit->add_option("--parallel", fit.workers, "Worker threads across sites")->capture_default_str();
  c_fit->add_option("--out", fit.out, "Model JSON to write")->required();

  GridConfig grid;
  auto* c_grid = app.add_subcommand("gridsearch", "Refit over a grid of offsets or alphas");
  c_grid->add_option("--data", grid.data, "Dataset file")->required();
  c_grid->add_option("--trend", grid.trend, "Trend JSON")->required();
  c_grid->add_option("--grid", grid.grid, "Grid JSON")->required();
  c_grid->add_flag("--refine", grid.refine, "Fit a quadratic near the best offsets");
  c_grid->add_option("--max-iter", grid.max_iter, "Quasi-Newton iteration limit per cell")->capture_default_str();
  c_grid->add_option("--grad-tol", grid.grad_tol, "Gradient tolerance per cell")->capture_default_str();
  c_grid->add_option("--parallel", grid.parallel, "Grid cells in parallel")->capture_default_str();
  c_grid->add_option("--out", grid.out, "Table CSV to write (summary JSON alongside)")->required();

  SimulateConfig sim;
  std::uint64_t sim_seed = 0;
  auto* c_sim = app.add_subcommand("simulate", "Conditional ensembles at target sites");
  c_sim->add_option("--model", sim.model, "Model JSON")->required();
  c_sim->add_option("--trend", sim.trend, "Trend JSON")->required();
  c_sim->add_option("--data", sim.data, "Dataset file with the observed sites")->required();
  c_sim->add_option("--targets", sim.targets, "Targets JSON")->required();
  c_sim->add_option("--nsims", sim.n_sims, "Ensemble size")->capture_default_str();
  c_sim->add_option("--seed", sim_seed, "Random seed")->required();
  c_sim->add_option("--level", sim.level, "Band level")->capture_default_str();
  c_sim->add_option("--weight-scale", sim.weight_scale, "Multiplier on weight perturbation sd")
      ->capture_default_str();
  bool no_perturb = false;
  c_sim->add_flag("--no-perturb", no_perturb, "Use the fitted weights in every draw");
  c_sim->add_flag("--allow-unit-alpha", sim.allow_unit_alpha, "Permit alpha = 1 (drifting paths)");
  c_sim->add_option("--parallel", sim.parallel, "Draws in parallel")->capture_default_str();
  c_sim->add_option("--out", sim.out_dir, "Output directory")->required();

  EvaluateConfig eval;
  auto* c_eval = app.add_subcommand("evaluate", "Band coverage and width against held-out truth");
  c_eval->add_option("--ens", eval.ens, "Ensemble directory")->required();
  c_eval->add_option("--truth", eval.truth, "Held-out CSV (minute,<ids>)")->required();
  c_eval->add_option("--out", eval.out, "Report JSON to write")->required();

  SynthConfig synth;
  std::uint64_t synth_seed = 0;
  auto* c_synth = app.add_subcommand("synth", "Unconditional synthetic station data from a model");
  c_synth->add_option("--model", synth.model, "Model JSON")->required();
  c_synth->add_option("--sites", synth.sites, "Layout JSON")->required();
  c_synth->add_option("--trend", synth.trend, "Trend JSON (temporal mean and site offsets)");
  c_synth->add_option("--T", synth.T, "Length in minutes")->required();
  c_synth->add_option("--seed", synth_seed, "Random seed")->required();
  c_synth->add_option("--out", synth.out, "Station CSV to write (metadata alongside)")->required();

  std::string manifest;
  auto* c_verify = app.add_subcommand("verify", "Check config hashes and artifact hashes in a manifest");
  c_verify->add_option("manifest", manifest, "manifest.json or its directory")->required();

  std::string run_config;
  auto* c_run = app.add_subcommand("run", "Run the whole pipeline from a config file");
  c_run->add_option("--config", run_config, "Run config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*c_ingest) {
      std::stringstream ss(holdout);
      for (std::string id; std::getline(ss, id, ',');)
        if (!id.empty()) ingest.holdout.push_back(id);
      run_ingest(ingest);
    } else if (*c_trend) {
      trend.fit_jump = !no_jump;
      run_fit_trend(trend);
    } else if (*c_fit) {
      std::tie(fit.sunrise, fit.sunset) = parse_offsets(fit_offsets);
      fit.variant = parse_variant(fit_variant);
      fit.hessian = !no_hessian;
      run_fit(fit);
    } else if (*c_grid) {
      run_gridsearch(grid);
    } else if (*c_sim) {
      sim.seed = sim_seed;
      sim.perturb = !no_perturb;
      run_simulate(sim);
    } else if (*c_eval) {
      run_evaluate(eval);
    } else if (*c_synth) {
      synth.seed = synth_seed;
      run_synth(synth);
    } else if (*c_verify) {
      fs::path p = manifest;
      if (fs::is_directory(p)) p /= "manifest.json";
      const auto rep = verify_manifest(p);
      for (const auto& msg : rep.problems) std::cerr << "verify: " << msg << "\n";
      std::cout << (rep.ok() ? "OK" : "FAILED") << ": " << rep.checked << " entries checked, "
                << rep.problems.size() << " problems\n";
      return rep.ok() ? 0 : kExitValidation;
    } else if (*c_run) {
      const fs::path p = run_config;
      run_pipeline(parse_run_config(read_json(p), p.parent_path()));
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.numerical() ? kExitNumerical : kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
