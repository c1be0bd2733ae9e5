#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "evospec/bspline.hpp"
#include "evospec/data_ingest.hpp"

namespace evospec {

inline constexpr int kRadiationBandwidth = 10;  // minutes, left-sided Daniell
inline constexpr int kPeriodogramGrid = 512;
inline constexpr std::size_t kMinBlockLength = 32;
inline constexpr double kRegimeSplitCpd = 2.0;

/// Fixed frequency profile: log mu(omega) is a cubic B-spline in cycles/day.
struct Regime {
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(kRegimeBasisSize);

  double log_amplitude(double omega) const;
  double operator()(double omega) const { return std::exp(log_amplitude(omega)); }
};

/// Changepoints for one site; block b covers cp[b-1] <= t < cp[b].
/// Even blocks are night, odd blocks are day.
struct BlockPartition {
  std::vector<double> changepoints;
  double sunrise_offset = 0.0;
  double sunset_offset = 0.0;

  int blocks() const { return static_cast<int>(changepoints.size()) + 1; }
  int block_of(double t) const;
  static bool is_day(int b) { return b % 2 == 1; }
};

/// Everything that determines the transfer function apart from site geometry.
struct EvoSpectrumModel {
  std::vector<Regime> regimes;   // K = 1 or 2; regime 0 is "day"
  Eigen::MatrixXd weights;       // K x B
  double a0 = 1.0;
  double a1 = 0.0;
  double alpha = 1.0;
  double sunrise_offset = 0.0;
  double sunset_offset = 0.0;
  SolarClock clock;

  int K() const { return static_cast<int>(regimes.size()); }
  int B() const { return static_cast<int>(weights.cols()); }
};

/// Per-site schedule: phase, partition, block index and phase-shifted
/// smoothed radiation at every minute.
struct SiteSchedule {
  double phase = 0.0;
  BlockPartition partition;
  std::vector<int> block;
  Series radiation;
};

Series partial_difference(const Series& x, double alpha);
Series undifference(const Series& diffs, double alpha, double x1);

Series smooth_radiation(const Series& raw);

/// r(t - phase) by linear interpolation, clamped at the ends.
Series shift_series(const Series& r, double phase);

struct PrelimRadiation {
  double a0 = 0.0;
  double a1 = 0.0;
  bool a1_unidentified = false;
};
/// Pooled Gaussian ML of diffs(t) = [a0 + a1 r(t)] eps(t) over sites, with
/// each site's radiation already phase-shifted.
PrelimRadiation fit_prelim_radiation(const std::vector<Series>& diffs, const std::vector<Series>& radiation);

/// Per-site changepoints at shifted sunrise/sunset, clipped to [0, T].
BlockPartition block_partition(const std::vector<DayLight>& days, std::size_t T, double sunrise_offset,
                               double sunset_offset, double phase);
std::vector<BlockPartition> block_partition(const StationSet& data, double sunrise_offset,
                                            double sunset_offset, const SolarClock& clock);

/// Phase (minutes) of every site relative to the central longitude.
std::vector<double> site_phases(const StationSet& data, const SolarClock& clock);

SiteSchedule make_schedule(const std::vector<DayLight>& days, std::size_t T, const Series& smoothed_radiation,
                           double sunrise_offset, double sunset_offset, double phase);
std::vector<SiteSchedule> make_schedules(const StationSet& data, double sunrise_offset, double sunset_offset,
                                         const SolarClock& clock);

struct AveragedPeriodograms {
  std::vector<double> grid;         // rad/min, kPeriodogramGrid points on [0, pi]
  std::vector<double> day;
  std::vector<double> night;
  std::vector<double> month_freqs;  // native Fourier frequencies of the full series, [0, pi]
  std::vector<double> month;
  int day_blocks = 0;
  int night_blocks = 0;
  int skipped_blocks = 0;
};

/// Block periodograms |DFT|^2 / (T_b * T), interpolated onto the grid and
/// averaged by time of day over blocks and sites; plus the full-series average.
AveragedPeriodograms average_periodograms(const std::vector<Series>& scaled,
                                          const std::vector<BlockPartition>& partitions);

struct RegimePair {
  Regime day;
  Regime night;
  bool widened_low_band = false;
};
/// Two-stage least squares: shared low-frequency coefficients from the month
/// average, then the remaining ones per regime from the day/night averages.
RegimePair fit_regimes(const AveragedPeriodograms& avg);
/// All coefficients fitted to the month average (single stationary regime).
Regime fit_month_regime(const AveragedPeriodograms& avg);

/// A(t, omega) for a site.
double transfer_function(const EvoSpectrumModel& model, const SiteSchedule& schedule, std::size_t t,
                         double omega);

/// Weights initialised to 1 for the regime matching the block's time of day, 0.2 otherwise.
Eigen::MatrixXd initial_weights(int K, int B);

}  // namespace evospec
