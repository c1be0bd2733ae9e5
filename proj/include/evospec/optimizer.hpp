#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evospec/evo_spectrum.hpp"
#include "evospec/spectral_likelihood.hpp"

namespace evospec {

/// Residuals Yhat per site plus the station set that supplies geometry,
/// radiation and sunrise/sunset. Residuals are in station order.
struct FitData {
  StationSet stations;
  std::vector<Series> residuals;
};

struct FitOptions {
  SolarClock clock;
  LikelihoodOptions lik;
  int max_iter = 200;
  double grad_tol = 1e-4;   // relative to 1 + |loglik|
  bool hessian = true;
  unsigned workers = 1;     // grid cells in parallel; sites within a fit use lik.workers
};

/// Output of steps 1-4: differenced residuals, schedules, preliminary
/// radiation coefficients, regimes and starting weights for one (offsets, alpha).
struct RegimeStage {
  EvoSpectrumModel evo;
  LikelihoodData lik;
  PrelimRadiation prelim;
  Regime month;
  bool widened_low_band = false;
};
RegimeStage estimate_regimes(const FitData& data, double sunrise_offset, double sunset_offset, double alpha,
                             const SolarClock& clock);

enum class Variant { full, stationary, daynight, radiation };
std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct Convergence {
  int iterations = 0;
  int evaluations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  bool stalled = false;
  std::string status;
};

struct FitResult {
  Variant variant = Variant::full;
  EvoSpectrumModel evo;
  CoherenceModel coh;
  double negloglik = 0.0;
  /// Over (log a0, log a1, log w_kb with index 2 + k*B + b).
  Eigen::MatrixXd hessian;
  Convergence convergence;
  PrelimRadiation prelim;
};

/// Maps free log-parameters onto the model. Each free parameter sets a
/// group of natural parameters to exp(theta); everything else stays fixed.
class Parameterization {
 public:
  enum class Slot { a0, a1, weight, gamma };
  struct Group {
    Slot slot;
    std::vector<int> index;   // weight: k*B + b; gamma: coefficient index
  };

  Parameterization(Variant variant, const EvoSpectrumModel& evo, bool a1_free);

  int size() const { return static_cast<int>(groups_.size()); }
  const std::vector<Group>& groups() const { return groups_; }
  Eigen::VectorXd pack(const EvoSpectrumModel& evo, const CoherenceModel& coh) const;
  void unpack(const Eigen::VectorXd& theta, EvoSpectrumModel& evo, CoherenceModel& coh) const;
  /// Chain rule from natural-parameter partials to log-parameter partials.
  Eigen::VectorXd chain(const LikelihoodGradient& g, const EvoSpectrumModel& evo, const CoherenceModel& coh) const;

 private:
  std::vector<Group> groups_;
  int B_ = 0;
};

/// gamma coefficients with gamma(0) equal to the median inter-site distance.
CoherenceModel initial_coherence(const std::vector<SiteGeometry>& sites, const SolarClock& clock);

/// Quasi-Newton descent of the negative log likelihood in the log parameterization.
FitResult maximize_likelihood(const RegimeStage& stage, const CoherenceModel& init, const FitOptions& opt,
                              Variant variant = Variant::full);

/// Central differences of the analytic gradient over (log a0, log a1, log w).
Eigen::MatrixXd weight_hessian(const EvoSpectrumModel& evo, const CoherenceModel& coh, const LikelihoodData& lik,
                               const LikelihoodOptions& opt, double step = 1e-4);

/// Steps 1-5 for one (offsets, alpha).
FitResult fit_model(const FitData& data, double sunrise_offset, double sunset_offset, double alpha,
                    const FitOptions& opt);

/// Restricted single-regime fits on first differences with fixed offsets.
FitResult fit_variant(const FitData& data, Variant variant, double sunrise_offset, double sunset_offset,
                      const FitOptions& opt, double alpha = 1.0);

struct GridRow {
  double sunrise = 0.0;
  double sunset = 0.0;
  std::optional<double> negloglik;  // empty when the cell failed
  double delta_thousands = 0.0;     // (negloglik - best) / 1000
  std::string error;
};
struct GridSearchTable {
  std::vector<GridRow> rows;
  std::size_t best = 0;
};

/// Finalizes deltas against the best valid row. Throws if no row is valid.
void finalize_table(GridSearchTable& table);

/// Refits (regimes and likelihood) at every offset pair.
GridSearchTable grid_search_offsets(const FitData& data, const std::vector<std::pair<double, double>>& grid,
                                    double alpha, const FitOptions& opt);

/// Cartesian grid from sunrise and sunset candidate lists.
std::vector<std::pair<double, double>> offset_grid(const std::vector<double>& sunrise,
                                                   const std::vector<double>& sunset);

struct RefinedOffsets {
  double sunrise = 0.0;
  double sunset = 0.0;
  bool fallback = false;
  std::string reason;
};
/// Least-squares quadratic over the cells within one grid step of the best.
RefinedOffsets refine_quadratic(const GridSearchTable& table);

struct AlphaCurve {
  std::vector<double> alphas;
  std::vector<std::optional<double>> negloglik;
  std::vector<double> delta;   // negloglik - best, NaN for failed cells
  double best_alpha = 1.0;
  std::size_t best = 0;
};
AlphaCurve grid_search_alpha(const FitData& data, const std::vector<double>& alphas, double sunrise_offset,
                             double sunset_offset, const FitOptions& opt);

}  // namespace evospec
