#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "evospec/simulation.hpp"

using namespace evospec;

namespace {

FitResult truth_fit(const SyntheticTruth& truth) {
  FitResult f;
  f.evo = truth.evo;
  f.coh = truth.coh;
  const int p = 2 + truth.evo.K() * truth.evo.B();
  f.hessian = 1e4 * Eigen::MatrixXd::Identity(p, p);
  return f;
}

SyntheticTruth small_scenario(bool jump = false) {
  ScenarioOptions so;
  so.n_sites = 4;
  so.jump = jump;
  return make_scenario(so);
}

}  // namespace

TEST(Simulation, StreamSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(stream_seed(42, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(stream_seed(1, 0), stream_seed(2, 0));
}

TEST(Simulation, QuantileBandsType7) {
  std::vector<Series> draws;
  for (int i = 0; i < 11; ++i) draws.push_back({double(i), 5.0});
  const auto b = quantile_bands(draws, 0.9);
  // h = 10 * 0.05 = 0.5 and 10 * 0.95 = 9.5
  EXPECT_DOUBLE_EQ(b.lower[0], 0.5);
  EXPECT_DOUBLE_EQ(b.upper[0], 9.5);
  EXPECT_DOUBLE_EQ(b.lower[1], 5.0);
  EXPECT_DOUBLE_EQ(b.upper[1], 5.0);
  const auto full = quantile_bands(draws, 1.0);
  EXPECT_DOUBLE_EQ(full.lower[0], 0.0);
  EXPECT_DOUBLE_EQ(full.upper[0], 10.0);
  EXPECT_THROW(quantile_bands({draws[0]}, 0.9), ValidationError);
  EXPECT_THROW(quantile_bands(draws, 0.0), ValidationError);
}

TEST(Simulation, CoverageAndWidths) {
  Bands b{{0, 0, 0, 0}, {1, 3, 1, 3}};
  BlockPartition p;
  p.changepoints = {1, 3};
  const auto r = evaluate_coverage(b, {0.5, 4.0, 0.5, 2.0}, p);
  EXPECT_DOUBLE_EQ(r.coverage, 0.75);
  EXPECT_DOUBLE_EQ(r.day.mean, 2.0);
  EXPECT_EQ(r.day.count, 2u);
  EXPECT_DOUBLE_EQ(r.night.mean, 2.0);
  EXPECT_NEAR(r.day.sd, std::sqrt(2.0), 1e-15);
  EXPECT_THROW(evaluate_coverage(b, {1, 2}, p), ValidationError);
}

TEST(Simulation, ConditionalFourierDrawCopiesCoincident) {
  CoherenceModel coh;
  coh.gamma_coeffs << 60, 50, 35, 20, 10;
  std::vector<SiteGeometry> obs{{"a", 0, 0, 0}, {"b", 10, 5, -4}};
  Eigen::VectorXcd z(2);
  z << cplx(0.3, -1.0), cplx(2.0, 0.5);
  std::vector<SiteGeometry> tgt{{"b'", 10, 5, -4}, {"c", 3, 3, 0}, {"a'", 0, 0, 0}};
  std::mt19937_64 rng(1);
  for (double w : {0.001, 0.1, 3.0}) {
    const auto d = conditional_fourier_draw(coh, w, obs, z, tgt, false, rng);
    EXPECT_EQ(d(0), z(1));
    EXPECT_EQ(d(2), z(0));
    EXPECT_TRUE(std::isfinite(d(1).real()));
  }
  const auto r = conditional_fourier_draw(coh, 0.0, obs, z.real().cast<cplx>(), tgt, true, rng);
  EXPECT_EQ(r(1).imag(), 0.0);
  EXPECT_THROW(conditional_fourier_draw(coh, 4.0, obs, z, tgt, false, rng), ValidationError);
}

TEST(Simulation, ConditionalMeanAtNearbySiteFollowsObservation) {
  // A target a few metres from an observed site is almost perfectly coherent.
  CoherenceModel coh;
  coh.gamma_coeffs << 60, 50, 35, 20, 10;
  std::vector<SiteGeometry> obs{{"a", 0, 0, 0}};
  std::vector<SiteGeometry> tgt{{"t", 0.001, 0, 0}};
  Eigen::VectorXcd z(1);
  z << cplx(1.0, 1.0);
  std::mt19937_64 rng(3);
  const auto d = conditional_fourier_draw(coh, 0.01, obs, z, tgt, false, rng);
  EXPECT_NEAR(std::abs(d(0) - z(0)), 0.0, 0.05);
}

TEST(Simulation, CoincidentSitesSimulateIdentically) {
  auto truth = small_scenario();
  auto layout = truth.data;
  layout.records[1].lon = layout.records[0].lon;
  layout.records[1].lat = layout.records[0].lat;
  std::mt19937_64 rng(5);
  const auto sites = site_geometry(layout, truth.evo.clock);
  const auto sched = make_schedules(layout, truth.evo.sunrise_offset, truth.evo.sunset_offset, truth.evo.clock);
  const auto Y = simulate_residuals(truth.evo, truth.coh, sites, sched, rng);
  EXPECT_EQ(Y[0], Y[1]);
  EXPECT_NE(Y[0], Y[2]);
}

TEST(Simulation, PerturbationKeepsWeightsPositive) {
  const auto truth = small_scenario();
  auto fit = truth_fit(truth);
  fit.hessian *= 1e-4;  // wide perturbations
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const auto p = perturb_weights(fit, rng);
    EXPECT_TRUE((p.evo.weights.array() > 0).all());
    EXPECT_GT(p.log_shift.cwiseAbs().maxCoeff(), 0.0);
  }
  const auto z = perturb_weights(fit, rng, 0.0);
  EXPECT_EQ(z.evo.weights, truth.evo.weights);
  fit.hessian.resize(0, 0);
  EXPECT_THROW(perturb_weights(fit, rng), ValidationError);
}

TEST(Simulation, PerturbationMeanIsTheFit) {
  const auto truth = small_scenario();
  auto fit = truth_fit(truth);
  fit.hessian *= 0.04;  // log sd 0.5
  std::mt19937_64 rng(21);
  const int N = 10000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(fit.evo.K() * fit.evo.B());
  for (int i = 0; i < N; ++i) mean += perturb_weights(fit, rng).log_shift;
  mean /= N;
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), 4.0 * 0.5 / std::sqrt(double(N)));
}

TEST(Simulation, FlatWeightDirectionsAreNotPerturbed) {
  const auto truth = small_scenario();
  auto fit = truth_fit(truth);
  // Trading weight 3 against weight 4 barely moves the likelihood.
  Eigen::VectorXd v = Eigen::VectorXd::Zero(fit.hessian.rows());
  v(2 + 3) = std::sqrt(0.5);
  v(2 + 4) = -std::sqrt(0.5);
  fit.hessian -= (1e4 - 0.01) * v * v.transpose();
  std::mt19937_64 rng(23);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const auto p = perturb_weights(fit, rng);
    EXPECT_EQ(p.unidentified, 1);
    worst = std::max(worst, std::abs(p.log_shift.dot(v.tail(v.size() - 2))));
  }
  EXPECT_LT(worst, 0.1);
}

TEST(Simulation, ConditionalEnsembleReproducesObservedSites) {
  const auto truth = small_scenario(true);
  const auto fit = truth_fit(truth);
  const auto& obs = truth.data.records[2];
  std::vector<TargetSite> targets{{"copy", obs.lon, obs.lat, obs.elev},
                                  {"new", obs.lon + 0.05, obs.lat - 0.04, 180.0}};
  SimulationOptions so;
  so.n_sims = 4;
  so.seed = 99;
  const auto ens = simulate_conditional(fit, truth.trend, truth.data, targets, so);
  ASSERT_EQ(ens.draws.size(), 2u);
  for (const auto& d : ens.draws[0]) EXPECT_EQ(d, obs.temps);
  EXPECT_NE(ens.draws[1][0], ens.draws[1][1]);
  EXPECT_EQ(ens.bands[0].lower, obs.temps);

  const auto again = simulate_conditional(fit, truth.trend, truth.data, targets, so);
  EXPECT_EQ(again.draws[1][3], ens.draws[1][3]);
  so.workers = 2;
  const auto threaded = simulate_conditional(fit, truth.trend, truth.data, targets, so);
  EXPECT_EQ(threaded.draws[1][2], ens.draws[1][2]);
}

TEST(Simulation, UnitAlphaNeedsOverride) {
  const auto truth = small_scenario();
  auto fit = truth_fit(truth);
  fit.evo.alpha = 1.0;
  SimulationOptions so;
  so.n_sims = 2;
  const std::vector<TargetSite> t{{"x", truth.data.records[0].lon + 0.01, truth.data.records[0].lat, 0}};
  EXPECT_THROW(simulate_conditional(fit, truth.trend, truth.data, t, so), ValidationError);
  so.allow_unit_alpha = true;
  EXPECT_NO_THROW(simulate_conditional(fit, truth.trend, truth.data, t, so));
}

TEST(Simulation, UnconditionalRoundTripThroughTrend) {
  const auto truth = small_scenario();
  std::mt19937_64 rng(13);
  const auto sim = simulate_unconditional(truth.evo, truth.coh, truth.trend, truth.data, rng);
  ASSERT_EQ(sim.n(), truth.data.n());
  const auto Y = residuals(sim, truth.trend.means, JumpModel{});
  // Residual paths start at their first difference, as simulated.
  for (const auto& y : Y) EXPECT_TRUE(std::isfinite(y.back()));
  EXPECT_NE(sim.records[0].temps, truth.data.records[0].temps);
}
