#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evospec/artifacts.hpp"

namespace evospec {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

/// Thrown when a pipeline stage fails; keeps the original error category.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::string message, bool numerical)
      : std::runtime_error("stage " + stage + ": " + message), stage_(std::move(stage)), numerical_(numerical) {}
  const std::string& stage() const { return stage_; }
  bool numerical() const { return numerical_; }

 private:
  std::string stage_;
  bool numerical_;
};

struct IngestConfig {
  fs::path csv, meta, out;
  std::vector<std::string> holdout;
  std::optional<fs::path> truth_out;     // held-out temperatures (minute,<id...>)
  std::optional<fs::path> targets_out;   // held-out coordinates as a targets file
};

struct TrendConfig {
  fs::path data, out;
  std::optional<fs::path> bursts;
  int jump_day = 5;
  bool fit_jump = true;
  double threshold = kJumpThreshold;
  unsigned workers = 1;
};

struct FitConfig {
  fs::path data, trend, out;
  double sunrise = 0.0;
  double sunset = 0.0;
  double alpha = 1.0;
  Variant variant = Variant::full;
  bool hessian = true;
  int max_iter = 200;
  double grad_tol = 1e-4;
  unsigned workers = 1;
};

/// grid.json holds either {"sunrise": [...], "sunset": [...], "alpha": a}
/// (offset search) or {"alphas": [...], "offsets": [sr, ss]} (alpha search).
struct GridConfig {
  fs::path data, trend, grid, out;
  bool refine = false;
  int max_iter = 200;
  double grad_tol = 1e-4;
  unsigned parallel = 1;
};

struct SimulateConfig {
  fs::path model, trend, data, targets, out_dir;
  int n_sims = 99;
  std::optional<std::uint64_t> seed;
  double level = 0.9;
  double weight_scale = 1.0;
  bool allow_unit_alpha = false;
  bool perturb = true;
  unsigned parallel = 1;
};

struct EvaluateConfig {
  fs::path ens, truth, out;
};

/// sites file: {"sites": [{id, lon, lat, elev}], "central": "<id>",
/// optional "sunrise", "sunset", "peak_radiation"}.
struct SynthConfig {
  fs::path model, sites, out;
  std::optional<fs::path> trend;
  std::size_t T = 0;
  std::optional<std::uint64_t> seed;
};

struct VerifyReport {
  std::vector<std::string> problems;
  int checked = 0;
  bool ok() const { return problems.empty(); }
};

void run_ingest(const IngestConfig& cfg);
void run_fit_trend(const TrendConfig& cfg);
void run_fit(const FitConfig& cfg);
void run_gridsearch(const GridConfig& cfg);
void run_simulate(const SimulateConfig& cfg);
void run_evaluate(const EvaluateConfig& cfg);
void run_synth(const SynthConfig& cfg);
/// Recomputes config hashes and file hashes for every entry of a manifest.
VerifyReport verify_manifest(const fs::path& manifest);

/// Whole-pipeline configuration. Every stage writes into `workdir`.
struct RunConfig {
  fs::path workdir;
  fs::path csv, meta;
  std::vector<std::string> holdout;
  std::optional<fs::path> bursts;
  int jump_day = 5;
  bool fit_jump = true;
  double sunrise = 0.0, sunset = 0.0;
  std::vector<double> sunrise_grid, sunset_grid;   // offset search when both are non-empty
  bool refine = false;
  double alpha = 1.0;
  std::vector<double> alpha_grid;                  // alpha search when non-empty
  Variant variant = Variant::full;
  bool simulate = true;
  int n_sims = 99;
  std::optional<std::uint64_t> seed;
  double level = 0.9;
  bool allow_unit_alpha = false;
  unsigned parallel = 1;
};
RunConfig parse_run_config(const json& j, const fs::path& base);
/// ingest -> fit-trend -> [gridsearch] -> fit -> [simulate -> evaluate].
void run_pipeline(const RunConfig& cfg);

}  // namespace evospec
