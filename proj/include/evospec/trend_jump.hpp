#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "evospec/data_ingest.hpp"

namespace evospec {

inline constexpr int kMeanBandwidth = 20;   // minutes, centered Daniell
inline constexpr double kJumpThreshold = -0.35;

/// Temporal mean, site offsets and grand mean.
struct MeanCurves {
  Series m_hat;
  std::vector<std::string> site_ids;  // parallel to s
  std::vector<double> s;
  double grand_mean = 0.0;
};

/// Minutes [begin, end) (0-based) covered by a 1-based jump day.
struct JumpWindow {
  int jump_day = 5;
  std::size_t begin() const { return static_cast<std::size_t>(kMinutesPerDay) * (jump_day - 1); }
  std::size_t end() const { return static_cast<std::size_t>(kMinutesPerDay) * jump_day; }
  /// Minute at which b2 is tied to the temporal mean (start of the next day).
  std::size_t anchor() const { return end(); }
};

struct JumpSiteParams {
  std::string id;
  double tau = 0.0;     // minute (0-based, fractional)
  double D = 0.0;       // degC
  double lambda = 0.0;  // 1/minute
  bool flagged = false;
};

/// Parametric cold-front profile shared parts plus the per-site parameters.
struct JumpModel {
  JumpWindow window;
  double beta = 1.3;
  std::array<double, 3> nu{0.01, 0.01, 0.01};
  Series b1;                 // pre-jump mean over the window, b1[t - window.begin()]
  bool b1_held = false;      // some minutes had no unjumped site
  double b2_slope = 0.0;
  double b2_anchor_value = 0.0;
  std::vector<JumpSiteParams> sites;

  double b1_at(double t) const;
  double b2_at(double t) const {
    return b2_anchor_value + b2_slope * (t - static_cast<double>(window.anchor()));
  }
};

struct BurstInterval {
  std::string site;
  std::size_t start = 0;  // 0-based, endpoints kept
  std::size_t end = 0;
};

Series temporal_mean(const StationSet& data);

struct SiteMeans {
  std::vector<double> s;
  double grand_mean = 0.0;
};
SiteMeans spatial_site_means(const StationSet& data);

/// Replaces values strictly inside each [start, end] by the chord joining the endpoints.
Series replace_bursts(const Series& series, std::vector<std::pair<std::size_t, std::size_t>> intervals);
StationSet replace_bursts(StationSet data, const std::vector<BurstInterval>& bursts);

/// Earliest minute in the jump window whose first difference is below threshold, per site.
std::vector<std::size_t> preliminary_jump_times(const StationSet& data, const JumpWindow& window,
                                                double threshold = kJumpThreshold);

struct PreJumpMean {
  Series b1;
  bool held = false;
};
PreJumpMean fit_prejump_mean(const StationSet& data, const std::vector<std::size_t>& tau_bar,
                             const JumpWindow& window);

/// Slope of the post-jump line anchored at m_hat(window.anchor()).
struct PostJumpLine {
  double slope = 0.0;
  double anchor_value = 0.0;
};
PostJumpLine fit_postjump_mean(const StationSet& data, const std::vector<std::size_t>& tau_bar,
                               const Series& m_hat, const JumpWindow& window);

/// Regularized lower incomplete gamma P(shape, x).
double regularized_gamma_p(double shape, double x);

/// J(t) for one site. Zero outside the jump window.
double jump_profile(double t, double tau, double D, double lambda, const JumpModel& shared,
                    const Series& m_hat);

/// Full-length jump series for one site.
Series jump_series(const JumpModel& shared, double tau, double D, double lambda, const Series& m_hat);

/// Least-squares fit of (tau, D, lambda) for one site against first
/// differences over [tau_bar - 3, tau_bar + 20]. `shared` supplies b1/b2/beta/nu.
JumpSiteParams fit_jump_site(const Series& temps, std::size_t tau_bar, const JumpModel& shared,
                             const Series& m_hat);
/// Sum of squared first-difference errors for the given parameters.
double jump_objective(const Series& temps, std::size_t tau_bar, double tau, double D, double lambda,
                      const JumpModel& shared, const Series& m_hat);

std::vector<JumpSiteParams> fit_jump_params(const StationSet& data, const std::vector<std::size_t>& tau_bar,
                                            const JumpModel& shared, const Series& m_hat,
                                            unsigned workers = 1);

/// Yhat = X - m_hat - s - J per site.
std::vector<Series> residuals(const StationSet& data, const MeanCurves& means, const JumpModel& jump);

struct TrendOptions {
  int jump_day = 5;
  double threshold = kJumpThreshold;
  bool fit_jump = true;
  unsigned workers = 1;
};

/// Means, bursts and jump fit in one pass.
struct TrendFit {
  MeanCurves means;
  JumpModel jump;
  bool has_jump = false;
  std::vector<BurstInterval> bursts;
};
TrendFit fit_trend(const StationSet& data, const std::vector<BurstInterval>& bursts,
                   const TrendOptions& opt = {});

/// Residuals from a trend fit, using the burst-replaced data.
std::vector<Series> trend_residuals(const StationSet& data, const TrendFit& trend);

}  // namespace evospec
