#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "evospec/optimizer.hpp"
#include "evospec/spatial_field.hpp"
#include "evospec/spectral_likelihood.hpp"
#include "evospec/trend_jump.hpp"

namespace evospec {

/// Independent stream seed for draw i of a run seeded with `seed`.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t i);

struct PerturbedWeights {
  EvoSpectrumModel evo;
  Eigen::VectorXd log_shift;   // applied to log w, k*B + b
  bool projected = false;      // Hessian had negative curvature that was clipped
  int unidentified = 0;        // directions left unperturbed besides the ray
};
/// Curvature (nats per squared log unit) below which a Hessian direction
/// counts as unidentified: its standard deviation would exceed a factor e.
inline constexpr double kMinIdentifiedCurvature = 1.0;
/// Gaussian draw in (log a0, log a1, log w) with the pseudo-inverse of the
/// Hessian restricted to the complement of the overspecification ray and of
/// the unidentified directions; only the weight components are applied.
/// `scale` multiplies the standard deviations.
PerturbedWeights perturb_weights(const FitResult& fit, std::mt19937_64& rng, double scale = 1.0);

/// Z_u | Z_o at one frequency. Targets at the location of an observed site
/// copy its coefficient. `real_valued` selects the DC/Nyquist real draw.
Eigen::VectorXcd conditional_fourier_draw(const CoherenceModel& coh, double omega,
                                          const std::vector<SiteGeometry>& observed, const Eigen::VectorXcd& z_obs,
                                          const std::vector<SiteGeometry>& targets, bool real_valued,
                                          std::mt19937_64& rng);

/// Residual paths Y at the given sites (differenced model draw, then
/// undifferenced with Y(1) = first difference).
std::vector<Series> simulate_residuals(const EvoSpectrumModel& evo, const CoherenceModel& coh,
                                       const std::vector<SiteGeometry>& sites,
                                       const std::vector<SiteSchedule>& schedules, std::mt19937_64& rng);

/// Temperatures X = m + s + J + Y for the sites of `layout` (temps are replaced).
StationSet simulate_unconditional(const EvoSpectrumModel& evo, const CoherenceModel& coh, const TrendFit& trend,
                                  const StationSet& layout, std::mt19937_64& rng);

struct TargetSite {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  double elev = 0.0;
};

struct Bands {
  Series lower;
  Series upper;
};

struct SimulationOptions {
  int n_sims = 99;
  std::uint64_t seed = 0;
  double level = 0.9;
  double weight_scale = 1.0;
  bool allow_unit_alpha = false;
  bool perturb = true;
  unsigned workers = 1;
  LikelihoodOptions lik;
};

struct ConditionalEnsemble {
  std::vector<TargetSite> targets;
  std::vector<std::vector<Series>> draws;   // [target][draw]
  std::vector<Bands> bands;                 // per target
  std::vector<std::uint64_t> seeds;         // per draw
  std::vector<Eigen::MatrixXd> weights;     // perturbed weights per draw
  std::vector<SiteSchedule> schedules;      // per target
};

/// Conditional ensemble at the targets given the observed stations and the
/// fitted trend and spectrum.
ConditionalEnsemble simulate_conditional(const FitResult& fit, const TrendFit& trend, const StationSet& data,
                                         const std::vector<TargetSite>& targets, const SimulationOptions& opt);

/// Type-7 empirical quantiles (1-q)/2 and (1+q)/2 at every minute.
Bands quantile_bands(const std::vector<Series>& draws, double level);

struct WidthStats {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};
struct CoverageReport {
  double coverage = 0.0;
  WidthStats day, night, overall;
};
CoverageReport evaluate_coverage(const Bands& bands, const Series& truth, const BlockPartition& partition);

/// Site values for the spatial mean and jump-parameter fields.
std::vector<FieldSite> field_sites(const StationSet& data, const std::vector<std::string>& ids);
FieldSite field_site(const StationSet& data, double lon, double lat, double elev);

// Synthetic scenarios for tests, acceptance runs and `evospec synth`.

struct SiteLayout {
  std::string id;
  double lon = 0.0, lat = 0.0, elev = 0.0;
};

/// Station set with the given sites, a clear-sky radiation curve and fixed
/// sunrise/sunset; temperatures are zero.
StationSet synthetic_layout(const std::vector<SiteLayout>& sites, std::size_t central, std::size_t T,
                            double sunrise = 420.0, double sunset = 1140.0, double peak_radiation = 900.0);

/// Regime whose log amplitude approximates `log_mu(cpd)` in least squares.
Regime regime_from_function(const std::function<double(double)>& log_mu);

struct SyntheticTruth {
  StationSet data;
  EvoSpectrumModel evo;
  CoherenceModel coh;
  TrendFit trend;
  std::vector<Series> residuals;   // true Y per site
};

struct ScenarioOptions {
  int n_sites = 8;
  std::size_t T = 4320;
  double alpha = 0.99;
  double sunrise_offset = 60.0;
  double sunset_offset = -60.0;
  double day_inflation = 3.0;       // day-regime level above a few cycles/day
  double radiation_gain = 1.0;      // a1 * peak radiation relative to a0
  bool common_shape = false;        // night regime uses the day profile
  double field_eta = 0.0005;        // site-mean variogram slope, degC^2 per km
  bool jump = false;
  std::uint64_t seed = 1;
};
/// Two-regime, radiation-modulated truth on a random layout of sites.
SyntheticTruth make_scenario(const ScenarioOptions& opt);

}  // namespace evospec
