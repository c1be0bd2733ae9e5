#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evospec/evo_spectrum.hpp"

using namespace evospec;

namespace {

Series white(std::mt19937_64& rng, std::size_t T, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Series x(T);
  for (auto& v : x) v = nd(rng);
  return x;
}

Regime regime(const Eigen::VectorXd& c) {
  Regime r;
  r.coeffs = c;
  return r;
}

}  // namespace

TEST(EvoSpectrum, UndifferenceInvertsDifference) {
  std::mt19937_64 rng(3);
  const auto x = white(rng, 5000, 3.0);
  for (double a : {0.0, 0.5, 0.99, 1.0}) {
    const auto y = undifference(partial_difference(x, a), a, x[0]);
    double worst = 0;
    for (std::size_t t = 0; t < x.size(); ++t) worst = std::max(worst, std::abs(y[t] - x[t]));
    EXPECT_LE(worst, 1e-10) << "alpha " << a;
  }
}

TEST(EvoSpectrum, PartialDifferenceValues) {
  const auto d = partial_difference({1.0, 3.0, 2.0}, 0.5);
  EXPECT_DOUBLE_EQ(d[0], 1.0);
  EXPECT_DOUBLE_EQ(d[1], 2.5);
  EXPECT_DOUBLE_EQ(d[2], 0.5);
}

TEST(EvoSpectrum, PartitionFollowsOffsetsAndPhase) {
  const std::vector<DayLight> days{{420, 1140}, {421, 1139}};
  const auto p = block_partition(days, 2880, 30, -60, 4.0);
  ASSERT_EQ(p.changepoints.size(), 4u);
  EXPECT_DOUBLE_EQ(p.changepoints[0], 454.0);
  EXPECT_DOUBLE_EQ(p.changepoints[1], 1084.0);
  EXPECT_DOUBLE_EQ(p.changepoints[2], 1440.0 + 455.0);
  EXPECT_EQ(p.blocks(), 5);
  EXPECT_EQ(p.block_of(0), 0);
  EXPECT_EQ(p.block_of(454), 1);
  EXPECT_EQ(p.block_of(2879), 4);
  EXPECT_TRUE(BlockPartition::is_day(1));
  EXPECT_FALSE(BlockPartition::is_day(4));
  EXPECT_THROW(block_partition(days, 2880, 400, -400, 0.0), ValidationError);
  EXPECT_THROW(block_partition({{420, 1140}}, 2880, 0, 0, 0.0), ValidationError);
}

TEST(EvoSpectrum, WhiteNoisePeriodogramLevel) {
  // Unit-variance white noise has |A|^2 = 1/T under the unnormalized transform.
  std::mt19937_64 rng(5);
  const std::size_t T = 4320;
  const std::vector<DayLight> days(3, DayLight{420, 1140});
  std::vector<Series> xs;
  std::vector<BlockPartition> parts;
  for (int s = 0; s < 12; ++s) {
    xs.push_back(white(rng, T));
    parts.push_back(block_partition(days, T, 0, 0, 0));
  }
  const auto avg = average_periodograms(xs, parts);
  double day = 0, night = 0, month = 0;
  for (int g = 1; g < kPeriodogramGrid; ++g) {
    day += avg.day[g];
    night += avg.night[g];
  }
  for (std::size_t j = 1; j < avg.month.size(); ++j) month += avg.month[j];
  day /= kPeriodogramGrid - 1;
  night /= kPeriodogramGrid - 1;
  month /= static_cast<double>(avg.month.size() - 1);
  EXPECT_NEAR(day * T, 1.0, 0.05);
  EXPECT_NEAR(night * T, 1.0, 0.05);
  EXPECT_NEAR(month * T, 1.0, 0.05);
  EXPECT_EQ(avg.day_blocks, 36);
  EXPECT_EQ(avg.night_blocks, 48);
}

TEST(EvoSpectrum, NoiselessRegimeRecovery) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  const std::size_t T = 5760;
  Eigen::VectorXd day(kRegimeBasisSize), night(kRegimeBasisSize);
  for (int i = 0; i < kRegimeBasisSize; ++i) {
    day(i) = -3.0 + 0.5 * nd(rng);
    night(i) = i < kRegimeLowFrequencyCount ? day(i) : -3.5 + 0.5 * nd(rng);
  }
  const Regime rd = regime(day), rn = regime(night);
  AveragedPeriodograms avg;
  for (int g = 0; g < kPeriodogramGrid; ++g) {
    const double w = kPi * g / (kPeriodogramGrid - 1);
    avg.grid.push_back(w);
    avg.day.push_back(std::pow(rd(w), 2));
    avg.night.push_back(std::pow(rn(w), 2));
  }
  for (std::size_t j = 0; j <= T / 2; ++j) {
    const double w = 2 * kPi * double(j) / double(T);
    avg.month_freqs.push_back(w);
    avg.month.push_back(std::pow(rd(w), 2));
  }
  const auto fit = fit_regimes(avg);
  EXPECT_FALSE(fit.widened_low_band);
  EXPECT_LE((fit.day.coeffs - day).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((fit.night.coeffs - night).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((fit_month_regime(avg).coeffs - day).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(EvoSpectrum, ShortRecordFallsBackToMonthFit) {
  AveragedPeriodograms avg;
  for (int g = 0; g < kPeriodogramGrid; ++g) {
    avg.grid.push_back(kPi * g / (kPeriodogramGrid - 1));
    avg.day.push_back(1e-3);
    avg.night.push_back(2e-3);
  }
  const std::size_t T = 4320;
  for (std::size_t j = 0; j <= T / 2; ++j) {
    avg.month_freqs.push_back(2 * kPi * double(j) / double(T));
    avg.month.push_back(1.5e-3);
  }
  const auto fit = fit_regimes(avg);
  EXPECT_TRUE(fit.widened_low_band);
  EXPECT_NEAR(fit.night(2.0) / fit.day(2.0), std::sqrt(2.0), 1e-2);
  EXPECT_DOUBLE_EQ(fit.night.coeffs(0), fit.day.coeffs(0));
}

TEST(EvoSpectrum, PrelimRadiationRecovery) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  const std::size_t T = 20000;
  const double a0 = 0.4, a1 = 0.002;
  std::vector<Series> diffs(3, Series(T)), rad(3, Series(T));
  for (int s = 0; s < 3; ++s)
    for (std::size_t t = 0; t < T; ++t) {
      rad[s][t] = std::max(0.0, 800.0 * std::sin(2 * kPi * double(t) / 1440.0 + s));
      diffs[s][t] = (a0 + a1 * rad[s][t]) * nd(rng);
    }
  const auto p = fit_prelim_radiation(diffs, rad);
  EXPECT_FALSE(p.a1_unidentified);
  EXPECT_NEAR(p.a0 / a0, 1.0, 0.05);
  EXPECT_NEAR(p.a1 / a1, 1.0, 0.05);

  const std::vector<Series> dark(3, Series(T, 0.0));
  EXPECT_TRUE(fit_prelim_radiation(diffs, dark).a1_unidentified);
}

TEST(EvoSpectrum, TransferFunctionCombinesRegimes) {
  EvoSpectrumModel m;
  Eigen::VectorXd c = Eigen::VectorXd::Constant(kRegimeBasisSize, std::log(2.0));
  m.regimes = {regime(c), regime(Eigen::VectorXd::Zero(kRegimeBasisSize))};
  m.weights.resize(2, 2);
  m.weights << 1.0, 0.5, 3.0, 0.25;
  m.a0 = 2.0;
  m.a1 = 0.01;
  SiteSchedule s;
  s.block = {0, 1};
  s.radiation = {0.0, 100.0};
  EXPECT_NEAR(transfer_function(m, s, 0, 0.3), 2.0 * (2.0 + 3.0), 1e-12);
  EXPECT_NEAR(transfer_function(m, s, 1, 0.3), 3.0 * (1.0 + 0.25), 1e-12);
}

TEST(EvoSpectrum, ShiftSeriesInterpolates) {
  const auto r = shift_series({0.0, 10.0, 20.0, 30.0}, 1.5);
  EXPECT_DOUBLE_EQ(r[0], 0.0);
  EXPECT_DOUBLE_EQ(r[2], 5.0);
  EXPECT_DOUBLE_EQ(r[3], 15.0);
}
