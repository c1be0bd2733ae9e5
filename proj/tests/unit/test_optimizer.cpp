#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "evospec/optimizer.hpp"
#include "evospec/simulation.hpp"

using namespace evospec;

namespace {

GridSearchTable table_from(const std::function<double(double, double)>& f, const std::vector<double>& xs,
                           const std::vector<double>& ys) {
  GridSearchTable t;
  for (const auto& [x, y] : offset_grid(xs, ys)) {
    GridRow r;
    r.sunrise = x;
    r.sunset = y;
    r.negloglik = f(x, y);
    t.rows.push_back(r);
  }
  finalize_table(t);
  return t;
}

}  // namespace

TEST(Optimizer, OffsetGridIsCartesian) {
  const auto g = offset_grid({0, 30}, {-30, 0, 30});
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g[4], std::make_pair(30.0, 0.0));
}

TEST(Optimizer, FinalizeTablePicksMinimumAndSkipsFailures) {
  GridSearchTable t;
  t.rows = {{0, 0, 5000.0, 0, ""}, {10, 0, std::nullopt, 0, "boom"}, {20, 0, 2000.0, 0, ""}};
  finalize_table(t);
  EXPECT_EQ(t.best, 2u);
  EXPECT_DOUBLE_EQ(t.rows[0].delta_thousands, 3.0);
  EXPECT_TRUE(std::isnan(t.rows[1].delta_thousands));
  GridSearchTable bad;
  bad.rows = {{0, 0, std::nullopt, 0, "x"}};
  EXPECT_THROW(finalize_table(bad), NumericalError);
}

TEST(Optimizer, QuadraticRefinementFindsVertex) {
  auto f = [](double x, double y) {
    const double a = x - 37.0, b = y + 52.0;
    return 1000.0 + 3.0 * a * a + a * b + 2.0 * b * b;
  };
  const auto t = table_from(f, {20, 30, 40, 50}, {-70, -60, -50, -40});
  const auto r = refine_quadratic(t);
  ASSERT_FALSE(r.fallback) << r.reason;
  EXPECT_NEAR(r.sunrise, 37.0, 1e-8);
  EXPECT_NEAR(r.sunset, -52.0, 1e-8);
}

TEST(Optimizer, SaddleFallsBackToBestCell) {
  auto f = [](double x, double y) { return (x - 30) * (x - 30) - 0.1 * (y + 30) * (y + 30) + 0.5 * x; };
  const auto t = table_from(f, {10, 20, 30, 40}, {-50, -40, -30, -20, -10});
  const auto r = refine_quadratic(t);
  EXPECT_TRUE(r.fallback);
  EXPECT_DOUBLE_EQ(r.sunrise, t.rows[t.best].sunrise);
  EXPECT_DOUBLE_EQ(r.sunset, t.rows[t.best].sunset);
}

TEST(Optimizer, SingleCellFallsBack) {
  const auto t = table_from([](double, double) { return 1.0; }, {30}, {-30});
  const auto r = refine_quadratic(t);
  EXPECT_TRUE(r.fallback);
  EXPECT_DOUBLE_EQ(r.sunrise, 30.0);
}

TEST(Optimizer, VariantNames) {
  for (auto v : {Variant::full, Variant::stationary, Variant::daynight, Variant::radiation})
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("bogus"), ValidationError);
}

TEST(Optimizer, PackUnpackRoundTrip) {
  EvoSpectrumModel evo;
  evo.regimes.resize(2);
  evo.weights = Eigen::MatrixXd::Constant(2, 3, 0.5);
  evo.weights(1, 2) = 2.0;
  evo.a0 = 1.5;
  evo.a1 = 0.01;
  CoherenceModel coh;
  coh.gamma_coeffs << 5, 4, 3, 2, 1;

  Parameterization full(Variant::full, evo, true);
  EXPECT_EQ(full.size(), 2 + 6 + kGammaBasisSize);
  EvoSpectrumModel e2 = evo;
  CoherenceModel c2 = coh;
  full.unpack(full.pack(evo, coh), e2, c2);
  EXPECT_NEAR((e2.weights - evo.weights).norm(), 0.0, 1e-14);
  EXPECT_NEAR(e2.a1, evo.a1, 1e-16);
  EXPECT_NEAR((c2.gamma_coeffs - coh.gamma_coeffs).norm(), 0.0, 1e-13);

  // Day/night ties every day weight to one parameter.
  Parameterization dn(Variant::daynight, evo, true);
  EXPECT_EQ(dn.size(), 2 + kGammaBasisSize);
  Eigen::VectorXd th = dn.pack(evo, coh);
  th(0) = std::log(3.0);
  dn.unpack(th, e2, c2);
  EXPECT_DOUBLE_EQ(e2.weights(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(e2.weights(1, 1), 3.0);
  EXPECT_DOUBLE_EQ(e2.a0, evo.a0);

  EXPECT_EQ(Parameterization(Variant::stationary, evo, true).size(), 1 + kGammaBasisSize);
  EXPECT_EQ(Parameterization(Variant::radiation, evo, false).size(), 1 + kGammaBasisSize);
}

TEST(Optimizer, SmallFitConvergesAndImproves) {
  ScenarioOptions so;
  so.n_sites = 3;
  const auto truth = make_scenario(so);
  FitData fd{truth.data, truth.residuals};
  FitOptions fo;
  fo.hessian = true;
  const auto stage = estimate_regimes(fd, so.sunrise_offset, so.sunset_offset, so.alpha, fo.clock);
  const auto init = initial_coherence(stage.lik.sites, fo.clock);
  const double start = joint_negloglik(stage.evo, init, stage.lik, fo.lik);
  const auto fit = maximize_likelihood(stage, init, fo);
  EXPECT_LT(fit.negloglik, start);
  EXPECT_TRUE(fit.convergence.converged) << fit.convergence.status;
  EXPECT_EQ(fit.hessian.rows(), 2 + fit.evo.K() * fit.evo.B());
  EXPECT_NEAR((fit.hessian - fit.hessian.transpose()).norm() / fit.hessian.norm(), 0.0, 1e-3);
}

TEST(Optimizer, OneDayRecordIsTooShortForRegimes) {
  ScenarioOptions so;
  so.n_sites = 2;
  so.T = 1440;
  const auto truth = make_scenario(so);
  FitData fd{truth.data, truth.residuals};
  EXPECT_THROW(estimate_regimes(fd, 60, -60, 0.99, SolarClock{}), NumericalError);
}
