#include "evospec/evo_spectrum.hpp"

#include <gsl/gsl_multimin.h>

#include <cmath>

#include "evospec/fft.hpp"
#include "evospec/smoothing.hpp"

namespace evospec {

double Regime::log_amplitude(double omega) const {
  double w = std::fmod(std::abs(omega), 2.0 * kPi);
  if (w > kPi) w = 2.0 * kPi - w;
  return regime_basis().value(coeffs, rad_to_cpd(w));
}

int BlockPartition::block_of(double t) const {
  const auto it = std::upper_bound(changepoints.begin(), changepoints.end(), t);
  return static_cast<int>(it - changepoints.begin());
}

Series partial_difference(const Series& x, double alpha) {
  Series out(x.size());
  if (x.empty()) return out;
  out[0] = x[0];
  for (std::size_t t = 1; t < x.size(); ++t) out[t] = x[t] - alpha * x[t - 1];
  return out;
}

Series undifference(const Series& diffs, double alpha, double x1) {
  Series out(diffs.size());
  if (diffs.empty()) return out;
  out[0] = x1;
  for (std::size_t t = 1; t < diffs.size(); ++t) out[t] = alpha * out[t - 1] + diffs[t];
  return out;
}

Series smooth_radiation(const Series& raw) { return causal_daniell_smooth(raw, kRadiationBandwidth, 3); }

Series shift_series(const Series& r, double phase) {
  Series out(r.size());
  for (std::size_t t = 0; t < r.size(); ++t) out[t] = interpolate_at(r, static_cast<double>(t) - phase);
  return out;
}

namespace {

struct PrelimData {
  const std::vector<Series>* diffs;
  const std::vector<Series>* rad;
};

void prelim_fdf(const gsl_vector* x, void* params, double* f, gsl_vector* g) {
  const auto* d = static_cast<const PrelimData*>(params);
  const double a0 = std::exp(gsl_vector_get(x, 0));
  const double a1 = std::exp(gsl_vector_get(x, 1));
  double val = 0.0, g0 = 0.0, g1 = 0.0;
  for (std::size_t k = 0; k < d->diffs->size(); ++k) {
    const auto& y = (*d->diffs)[k];
    const auto& r = (*d->rad)[k];
    for (std::size_t t = 1; t < y.size(); ++t) {
      const double s = a0 + a1 * r[t];
      const double q = y[t] * y[t] / (s * s);
      val += std::log(s) + 0.5 * q;
      const double ds = (1.0 - q) / s;
      g0 += ds * a0;
      g1 += ds * a1 * r[t];
    }
  }
  if (f) *f = val;
  if (g) {
    gsl_vector_set(g, 0, g0);
    gsl_vector_set(g, 1, g1);
  }
}

double prelim_f(const gsl_vector* x, void* params) {
  double f = 0.0;
  prelim_fdf(x, params, &f, nullptr);
  return f;
}

void prelim_df(const gsl_vector* x, void* params, gsl_vector* g) { prelim_fdf(x, params, nullptr, g); }

}  // namespace

PrelimRadiation fit_prelim_radiation(const std::vector<Series>& diffs, const std::vector<Series>& radiation) {
  if (diffs.size() != radiation.size()) throw ValidationError("need one radiation series per site");
  double ss = 0.0, count = 0.0, rmax = 0.0;
  for (std::size_t k = 0; k < diffs.size(); ++k)
    for (std::size_t t = 1; t < diffs[k].size(); ++t) {
      ss += diffs[k][t] * diffs[k][t];
      count += 1.0;
      rmax = std::max(rmax, std::abs(radiation[k][t]));
    }
  if (count == 0) throw ValidationError("no differences to fit");
  PrelimRadiation out;
  const double rms = std::sqrt(ss / count);
  if (rmax == 0.0) {
    out.a0 = rms;
    out.a1 = 0.0;
    out.a1_unidentified = true;
    return out;
  }

  // Start from the night-time RMS and a moment regression for the slope.
  double night_ss = 0.0, night_n = 0.0;
  for (std::size_t k = 0; k < diffs.size(); ++k)
    for (std::size_t t = 1; t < diffs[k].size(); ++t)
      if (radiation[k][t] < 1e-9 * rmax) {
        night_ss += diffs[k][t] * diffs[k][t];
        night_n += 1.0;
      }
  const double a0_init = night_n > 0 ? std::sqrt(night_ss / night_n) : 0.5 * rms;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < diffs.size(); ++k)
    for (std::size_t t = 1; t < diffs[k].size(); ++t) {
      const double r = radiation[k][t];
      sxy += r * (std::abs(diffs[k][t]) * std::sqrt(kPi / 2.0) - a0_init);
      sxx += r * r;
    }
  const double a1_init = std::max(1e-3 * rms / rmax, sxy / sxx);

  PrelimData pd{&diffs, &radiation};
  gsl_multimin_function_fdf fn{&prelim_f, &prelim_df, &prelim_fdf, 2, &pd};
  gsl_vector* x = gsl_vector_alloc(2);
  gsl_vector_set(x, 0, std::log(std::max(a0_init, 1e-12)));
  gsl_vector_set(x, 1, std::log(a1_init));
  gsl_multimin_fdfminimizer* s = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, 2);
  gsl_multimin_fdfminimizer_set(s, &fn, x, 0.1, 0.1);
  for (int iter = 0; iter < 500; ++iter) {
    if (gsl_multimin_fdfminimizer_iterate(s)) break;
    if (gsl_multimin_test_gradient(s->gradient, 1e-8 * count) == GSL_SUCCESS) break;
  }
  out.a0 = std::exp(gsl_vector_get(s->x, 0));
  out.a1 = std::exp(gsl_vector_get(s->x, 1));
  gsl_multimin_fdfminimizer_free(s);
  gsl_vector_free(x);
  return out;
}

BlockPartition block_partition(const std::vector<DayLight>& days, std::size_t T, double sunrise_offset,
                               double sunset_offset, double phase) {
  BlockPartition p;
  p.sunrise_offset = sunrise_offset;
  p.sunset_offset = sunset_offset;
  const std::size_t n_days = std::min(days.size(), (T + kMinutesPerDay - 1) / kMinutesPerDay);
  if (n_days * kMinutesPerDay < T && days.size() < (T + kMinutesPerDay - 1) / kMinutesPerDay)
    throw ValidationError("sunrise/sunset table does not cover the record");
  const double Tmax = static_cast<double>(T);
  for (std::size_t d = 0; d < n_days; ++d) {
    const double base = static_cast<double>(d * kMinutesPerDay);
    const double rise = days[d].sunrise + sunrise_offset;
    const double set = days[d].sunset + sunset_offset;
    if (!(rise < set))
      throw ValidationError("offsets (" + format_double(sunrise_offset) + ", " + format_double(sunset_offset) +
                            ") make shifted sunrise reach shifted sunset on day " + std::to_string(d + 1));
    p.changepoints.push_back(std::clamp(base + rise + phase, 0.0, Tmax));
    p.changepoints.push_back(std::clamp(base + set + phase, 0.0, Tmax));
  }
  return p;
}

std::vector<double> site_phases(const StationSet& data, const SolarClock& clock) {
  std::vector<double> out;
  for (const auto& r : data.records) {
    out.push_back(local_phase_offset(clock, r.lon, data.central_lon) +
                  clock.theta * clock.phi[1] * (r.lat - data.central_lat));
  }
  return out;
}

std::vector<BlockPartition> block_partition(const StationSet& data, double sunrise_offset,
                                            double sunset_offset, const SolarClock& clock) {
  std::vector<BlockPartition> out;
  for (double phase : site_phases(data, clock))
    out.push_back(block_partition(data.days, data.T(), sunrise_offset, sunset_offset, phase));
  return out;
}

SiteSchedule make_schedule(const std::vector<DayLight>& days, std::size_t T, const Series& smoothed_radiation,
                           double sunrise_offset, double sunset_offset, double phase) {
  SiteSchedule s;
  s.phase = phase;
  s.partition = block_partition(days, T, sunrise_offset, sunset_offset, phase);
  s.block.resize(T);
  for (std::size_t t = 0; t < T; ++t) s.block[t] = s.partition.block_of(static_cast<double>(t));
  s.radiation = shift_series(smoothed_radiation, phase);
  return s;
}

std::vector<SiteSchedule> make_schedules(const StationSet& data, double sunrise_offset, double sunset_offset,
                                         const SolarClock& clock) {
  const Series r = smooth_radiation(data.radiation);
  std::vector<SiteSchedule> out;
  for (double phase : site_phases(data, clock))
    out.push_back(make_schedule(data.days, data.T(), r, sunrise_offset, sunset_offset, phase));
  return out;
}

namespace {

// Periodogram ordinates at 2 pi j / Tb, j = 0..Tb/2, interpolated onto the grid.
std::vector<double> block_periodogram_on_grid(const Series& x, std::size_t begin, std::size_t end,
                                              std::size_t T, const std::vector<double>& grid) {
  const std::size_t Tb = end - begin;
  const auto dft = fft::forward(std::span<const double>(x.data() + begin, Tb));
  const std::size_t half = Tb / 2;
  std::vector<double> I(half + 1);
  for (std::size_t j = 0; j <= half; ++j)
    I[j] = std::norm(dft[j]) / (static_cast<double>(Tb) * static_cast<double>(T));
  const double step = 2.0 * kPi / static_cast<double>(Tb);
  std::vector<double> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double pos = grid[g] / step;
    out[g] = interpolate_at(I, pos);
  }
  return out;
}

}  // namespace

AveragedPeriodograms average_periodograms(const std::vector<Series>& scaled,
                                          const std::vector<BlockPartition>& partitions) {
  if (scaled.size() != partitions.size()) throw ValidationError("need one partition per site");
  AveragedPeriodograms out;
  out.grid.resize(kPeriodogramGrid);
  for (int g = 0; g < kPeriodogramGrid; ++g) out.grid[g] = kPi * g / (kPeriodogramGrid - 1);
  out.day.assign(kPeriodogramGrid, 0.0);
  out.night.assign(kPeriodogramGrid, 0.0);
  if (scaled.empty()) throw ValidationError("no series to average");
  const std::size_t T = scaled.front().size();

  for (std::size_t k = 0; k < scaled.size(); ++k) {
    const auto& cp = partitions[k].changepoints;
    for (int b = 0; b < partitions[k].blocks(); ++b) {
      const double lo = b == 0 ? 0.0 : cp[b - 1];
      const double hi = b == static_cast<int>(cp.size()) ? static_cast<double>(T) : cp[b];
      const auto begin = static_cast<std::size_t>(std::ceil(lo));
      const auto end = std::min(T, static_cast<std::size_t>(std::ceil(hi)));
      if (end <= begin || end - begin < kMinBlockLength) {
        ++out.skipped_blocks;
        continue;
      }
      const auto I = block_periodogram_on_grid(scaled[k], begin, end, T, out.grid);
      auto& acc = BlockPartition::is_day(b) ? out.day : out.night;
      for (int g = 0; g < kPeriodogramGrid; ++g) acc[g] += I[g];
      (BlockPartition::is_day(b) ? out.day_blocks : out.night_blocks)++;
    }
  }
  if (out.day_blocks == 0) throw ValidationError("no daytime blocks long enough for a periodogram");
  if (out.night_blocks == 0) throw ValidationError("no nighttime blocks long enough for a periodogram");
  for (auto& v : out.day) v /= out.day_blocks;
  for (auto& v : out.night) v /= out.night_blocks;

  const std::size_t half = T / 2;
  out.month_freqs.resize(half + 1);
  out.month.assign(half + 1, 0.0);
  for (std::size_t j = 0; j <= half; ++j) out.month_freqs[j] = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(T);
  for (const auto& x : scaled) {
    const auto dft = fft::forward(std::span<const double>(x));
    for (std::size_t j = 0; j <= half; ++j)
      out.month[j] += std::norm(dft[j]) / (static_cast<double>(T) * static_cast<double>(T));
  }
  for (auto& v : out.month) v /= static_cast<double>(scaled.size());
  return out;
}

namespace {

struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Design design_rows(const std::vector<double>& freqs, const std::vector<double>& values, double lo_cpd,
                   double hi_cpd) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double c = rad_to_cpd(freqs[i]);
    if (c >= lo_cpd && c < hi_cpd && values[i] > 0 && std::isfinite(values[i])) rows.push_back(static_cast<int>(i));
  }
  Design d{Eigen::MatrixXd(rows.size(), kRegimeBasisSize), Eigen::VectorXd(rows.size())};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    d.X.row(static_cast<Eigen::Index>(r)) = regime_basis().evaluate(rad_to_cpd(freqs[rows[r]])).transpose();
    d.y(static_cast<Eigen::Index>(r)) = 0.5 * std::log(values[rows[r]]);
  }
  return d;
}

Eigen::VectorXd solve_ls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (X.rows() < X.cols() || qr.rank() < X.cols())
    throw NumericalError(std::string("singular design while fitting ") + what);
  return qr.solve(y);
}

}  // namespace

RegimePair fit_regimes(const AveragedPeriodograms& avg) {
  constexpr int L = kRegimeLowFrequencyCount;
  RegimePair out;
  // Stage (i): shared low-frequency shape from the month average. With fewer
  // month frequencies below the split than low coefficients, the low block is
  // taken from a fit of all coefficients to the whole month average instead.
  Eigen::VectorXd shared;
  const Design low = design_rows(avg.month_freqs, avg.month, 0.0, kRegimeSplitCpd);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(low.X.leftCols(L));
  if (low.X.rows() >= L && qr.rank() == L) {
    shared = qr.solve(low.y);
  } else {
    out.widened_low_band = true;
    shared = fit_month_regime(avg).coeffs.head(L);
  }

  // Stage (ii): remaining coefficients per regime.
  auto fit_high = [&](const std::vector<double>& values) {
    Design d = design_rows(avg.grid, values, 0.0, 1e9);
    const Eigen::VectorXd target = d.y - d.X.leftCols(L) * shared;
    const Eigen::VectorXd rest = solve_ls(d.X.rightCols(kRegimeBasisSize - L), target, "regime coefficients");
    Regime r;
    r.coeffs.head(L) = shared;
    r.coeffs.tail(kRegimeBasisSize - L) = rest;
    return r;
  };
  out.day = fit_high(avg.day);
  out.night = fit_high(avg.night);
  return out;
}

Regime fit_month_regime(const AveragedPeriodograms& avg) {
  Design d = design_rows(avg.month_freqs, avg.month, 0.0, 1e9);
  Regime r;
  r.coeffs = solve_ls(d.X, d.y, "month regime");
  return r;
}

double transfer_function(const EvoSpectrumModel& model, const SiteSchedule& schedule, std::size_t t,
                         double omega) {
  const int b = schedule.block[t];
  double M = 0.0;
  for (int k = 0; k < model.K(); ++k) M += model.weights(k, b) * model.regimes[k](omega);
  return (model.a0 + model.a1 * schedule.radiation[t]) * M;
}

Eigen::MatrixXd initial_weights(int K, int B) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(K, B, 1.0);
  if (K == 2)
    for (int b = 0; b < B; ++b) {
      const int match = BlockPartition::is_day(b) ? 0 : 1;
      w(1 - match, b) = 0.2;
    }
  return w;
}

}  // namespace evospec
