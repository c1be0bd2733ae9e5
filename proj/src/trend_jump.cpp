#include "evospec/trend_jump.hpp"

#include <gsl/gsl_multimin.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>

#include "evospec/smoothing.hpp"

namespace evospec {

double JumpModel::b1_at(double t) const {
  return interpolate_at(b1, t - static_cast<double>(window.begin()));
}

Series temporal_mean(const StationSet& data) {
  Series avg(data.T(), 0.0);
  for (const auto& r : data.records)
    for (std::size_t t = 0; t < avg.size(); ++t) avg[t] += r.temps[t];
  for (double& v : avg) v /= static_cast<double>(data.n());
  return daniell_smooth(std::move(avg), kMeanBandwidth, 3);
}

SiteMeans spatial_site_means(const StationSet& data) {
  SiteMeans out;
  double total = 0.0;
  for (const auto& r : data.records) {
    double sum = 0.0;
    for (double v : r.temps) sum += v;
    out.s.push_back(sum / static_cast<double>(data.T()));
    total += sum;
  }
  out.grand_mean = total / static_cast<double>(data.T() * data.n());
  for (double& v : out.s) v -= out.grand_mean;
  return out;
}

Series replace_bursts(const Series& series, std::vector<std::pair<std::size_t, std::size_t>> intervals) {
  std::sort(intervals.begin(), intervals.end());
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto [a, b] = intervals[i];
    if (a > b || b >= series.size()) throw ValidationError("burst interval out of range");
    if (i > 0 && a < intervals[i - 1].second) throw ValidationError("burst intervals overlap");
  }
  Series out = series;
  for (const auto& [a, b] : intervals) {
    const double ya = out[a], yb = out[b];
    for (std::size_t t = a + 1; t < b; ++t)
      out[t] = ya + (yb - ya) * static_cast<double>(t - a) / static_cast<double>(b - a);
  }
  return out;
}

StationSet replace_bursts(StationSet data, const std::vector<BurstInterval>& bursts) {
  for (auto& r : data.records) {
    std::vector<std::pair<std::size_t, std::size_t>> iv;
    for (const auto& b : bursts)
      if (b.site == r.site_id) iv.emplace_back(b.start, b.end);
    if (!iv.empty()) r.temps = replace_bursts(r.temps, iv);
  }
  for (const auto& b : bursts)
    if (!data.find(b.site)) throw ValidationError("burst refers to unknown site '" + b.site + "'");
  return data;
}

std::vector<std::size_t> preliminary_jump_times(const StationSet& data, const JumpWindow& window,
                                                double threshold) {
  std::vector<std::size_t> out;
  const std::size_t hi = std::min(window.end(), data.T());
  for (const auto& r : data.records) {
    std::size_t found = std::numeric_limits<std::size_t>::max();
    for (std::size_t t = std::max<std::size_t>(window.begin(), 1); t < hi; ++t) {
      if (r.temps[t] - r.temps[t - 1] < threshold) {
        found = t;
        break;
      }
    }
    if (found == std::numeric_limits<std::size_t>::max())
      throw ValidationError("site " + r.site_id + ": no first difference below the jump threshold on day " +
                            std::to_string(window.jump_day));
    out.push_back(found);
  }
  return out;
}

PreJumpMean fit_prejump_mean(const StationSet& data, const std::vector<std::size_t>& tau_bar,
                             const JumpWindow& window) {
  if (tau_bar.size() != data.n()) throw ValidationError("need one preliminary jump time per site");
  if (window.end() > data.T()) throw ValidationError("jump day extends past the end of the record");
  PreJumpMean out;
  Series avg(window.end() - window.begin());
  double last = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t t = window.begin(); t < window.end(); ++t) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < data.n(); ++k)
      if (tau_bar[k] > t) {
        sum += data.records[k].temps[t];
        ++count;
      }
    if (count > 0) {
      last = sum / count;
    } else {
      out.held = true;
      if (std::isnan(last)) last = 0.0;
    }
    avg[t - window.begin()] = last;
  }
  out.b1 = daniell_smooth(std::move(avg), kMeanBandwidth, 3);
  return out;
}

PostJumpLine fit_postjump_mean(const StationSet& data, const std::vector<std::size_t>& tau_bar,
                               const Series& m_hat, const JumpWindow& window) {
  if (window.anchor() >= m_hat.size())
    throw ValidationError("record must extend past the jump day to anchor the post-jump mean");
  const double anchor = static_cast<double>(window.anchor());
  const double c = m_hat[window.anchor()];
  double num = 0.0, den = 0.0;
  int points = 0;
  for (std::size_t t = window.begin(); t < window.end(); ++t) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < data.n(); ++k)
      if (static_cast<double>(tau_bar[k]) + 60.0 < static_cast<double>(t)) {
        sum += data.records[k].temps[t];
        ++count;
      }
    if (count == 0) continue;
    const double y = sum / count;
    const double w = static_cast<double>(t) - anchor;
    num += w * (y - c);
    den += w * w;
    ++points;
  }
  if (points < 2) throw ValidationError("fewer than 2 post-jump time points to fit the post-jump mean");
  return {num / den, c};
}

double regularized_gamma_p(double shape, double x) {
  if (x <= 0) return 0.0;
  return boost::math::gamma_p(shape, x);
}

double jump_profile(double t, double tau, double D, double lambda, const JumpModel& shared,
                    const Series& m_hat) {
  const auto& w = shared.window;
  if (t < static_cast<double>(w.begin()) || t >= static_cast<double>(w.end())) return 0.0;
  const double m_t = interpolate_at(m_hat, t);
  if (t < tau) return shared.b1_at(t) - m_t;
  const double dt = t - tau;
  const double lead = shared.b1_at(tau) - interpolate_at(m_hat, tau);
  return lead * std::exp(-shared.nu[0] * dt) - D * regularized_gamma_p(shared.beta, lambda * dt) +
         D * (1.0 - std::exp(-shared.nu[1] * dt)) +
         (shared.b2_at(t) - m_t) * (1.0 - std::exp(-shared.nu[2] * dt));
}

Series jump_series(const JumpModel& shared, double tau, double D, double lambda, const Series& m_hat) {
  Series out(m_hat.size(), 0.0);
  const std::size_t hi = std::min(shared.window.end(), m_hat.size());
  for (std::size_t t = shared.window.begin(); t < hi; ++t)
    out[t] = jump_profile(static_cast<double>(t), tau, D, lambda, shared, m_hat);
  return out;
}

double jump_objective(const Series& temps, std::size_t tau_bar, double tau, double D, double lambda,
                      const JumpModel& shared, const Series& m_hat) {
  const long lo = std::max<long>(1, static_cast<long>(tau_bar) - 3);
  const long hi = std::min<long>(static_cast<long>(temps.size()) - 1, static_cast<long>(tau_bar) + 20);
  auto fitted = [&](long t) {
    const double td = static_cast<double>(t);
    return m_hat[static_cast<std::size_t>(t)] + jump_profile(td, tau, D, lambda, shared, m_hat);
  };
  double sse = 0.0;
  double prev = fitted(lo - 1);
  for (long t = lo; t <= hi; ++t) {
    const double cur = fitted(t);
    const double e = (cur - prev) - (temps[static_cast<std::size_t>(t)] - temps[static_cast<std::size_t>(t - 1)]);
    sse += e * e;
    prev = cur;
  }
  return sse;
}

namespace {

struct JumpFitContext {
  const Series* temps;
  std::size_t tau_bar;
  const JumpModel* shared;
  const Series* m_hat;
};

double nm_objective(const gsl_vector* x, void* params) {
  const auto* ctx = static_cast<const JumpFitContext*>(params);
  const double tau = gsl_vector_get(x, 0);
  const double D = std::exp(gsl_vector_get(x, 1));
  const double lambda = std::exp(gsl_vector_get(x, 2));
  const double v = jump_objective(*ctx->temps, ctx->tau_bar, tau, D, lambda, *ctx->shared, *ctx->m_hat);
  return std::isfinite(v) ? v : std::numeric_limits<double>::max();
}

struct SimplexResult {
  std::array<double, 3> x;
  double f;
};

SimplexResult run_simplex(JumpFitContext& ctx, std::array<double, 3> start, std::array<double, 3> step) {
  gsl_multimin_function fn{&nm_objective, 3, &ctx};
  gsl_vector* x = gsl_vector_alloc(3);
  gsl_vector* ss = gsl_vector_alloc(3);
  for (std::size_t i = 0; i < 3; ++i) {
    gsl_vector_set(x, i, start[i]);
    gsl_vector_set(ss, i, step[i]);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
  gsl_multimin_fminimizer_set(s, &fn, x, ss);
  for (int iter = 0; iter < 4000; ++iter) {
    if (gsl_multimin_fminimizer_iterate(s)) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-11) == GSL_SUCCESS) break;
  }
  SimplexResult r{{gsl_vector_get(s->x, 0), gsl_vector_get(s->x, 1), gsl_vector_get(s->x, 2)}, s->fval};
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(x);
  gsl_vector_free(ss);
  return r;
}

}  // namespace

JumpSiteParams fit_jump_site(const Series& temps, std::size_t tau_bar, const JumpModel& shared,
                             const Series& m_hat) {
  JumpFitContext ctx{&temps, tau_bar, &shared, &m_hat};
  const std::size_t hi = std::min(temps.size() - 1, tau_bar + 20);
  double low = temps[tau_bar];
  for (std::size_t t = tau_bar; t <= hi; ++t) low = std::min(low, temps[t]);
  const double drop = std::max(0.5, temps[tau_bar > 0 ? tau_bar - 1 : 0] - low);

  const double tb = static_cast<double>(tau_bar);
  const std::array<double, 3> init{tb, std::log(drop), std::log(0.3)};
  const double f_init = jump_objective(temps, tau_bar, tb, drop, 0.3, shared, m_hat);

  SimplexResult best{init, f_init};
  for (double dtau : {-1.5, -0.5, 0.5}) {
    for (double lam : {0.1, 0.3, 0.8}) {
      SimplexResult r = run_simplex(ctx, {tb + dtau, std::log(drop), std::log(lam)}, {1.0, 0.3, 0.5});
      if (r.f < best.f) best = r;
    }
  }
  // Restarting from the best vertex tightens a collapsed simplex.
  for (int k = 0; k < 3; ++k) {
    SimplexResult r = run_simplex(ctx, best.x, {0.05, 0.02, 0.02});
    if (r.f <= best.f) best = r;
  }

  JumpSiteParams out;
  out.tau = best.x[0];
  out.D = std::exp(best.x[1]);
  out.lambda = std::exp(best.x[2]);
  out.flagged = !(best.f < f_init) && f_init > 0;
  if (out.D < 1e-3) out.flagged = true;
  if (out.flagged && !(best.f < f_init)) {
    out.tau = tb;
    out.D = drop;
    out.lambda = 0.3;
  }
  return out;
}

std::vector<JumpSiteParams> fit_jump_params(const StationSet& data, const std::vector<std::size_t>& tau_bar,
                                            const JumpModel& shared, const Series& m_hat, unsigned workers) {
  std::vector<JumpSiteParams> out(data.n());
  parallel_for(data.n(), workers, [&](std::size_t k) {
    out[k] = fit_jump_site(data.records[k].temps, tau_bar[k], shared, m_hat);
    out[k].id = data.records[k].site_id;
  });
  return out;
}

std::vector<Series> residuals(const StationSet& data, const MeanCurves& means, const JumpModel& jump) {
  std::vector<Series> out;
  for (std::size_t k = 0; k < data.n(); ++k) {
    Series J(data.T(), 0.0);
    for (const auto& p : jump.sites)
      if (p.id == data.records[k].site_id) J = jump_series(jump, p.tau, p.D, p.lambda, means.m_hat);
    double s = k < means.s.size() ? means.s[k] : 0.0;
    for (std::size_t i = 0; i < means.site_ids.size(); ++i)
      if (means.site_ids[i] == data.records[k].site_id) s = means.s[i];
    Series y(data.T());
    for (std::size_t t = 0; t < data.T(); ++t)
      y[t] = data.records[k].temps[t] - means.m_hat[t] - s - J[t];
    out.push_back(std::move(y));
  }
  return out;
}

TrendFit fit_trend(const StationSet& raw, const std::vector<BurstInterval>& bursts, const TrendOptions& opt) {
  TrendFit fit;
  fit.bursts = bursts;
  const StationSet data = replace_bursts(raw, bursts);
  fit.means.m_hat = temporal_mean(data);
  const auto sm = spatial_site_means(data);
  fit.means.s = sm.s;
  for (const auto& r : data.records) fit.means.site_ids.push_back(r.site_id);
  fit.means.grand_mean = sm.grand_mean;
  fit.jump.window.jump_day = opt.jump_day;
  if (!opt.fit_jump) return fit;

  const auto tau_bar = preliminary_jump_times(data, fit.jump.window, opt.threshold);
  const auto pre = fit_prejump_mean(data, tau_bar, fit.jump.window);
  fit.jump.b1 = pre.b1;
  fit.jump.b1_held = pre.held;
  const auto post = fit_postjump_mean(data, tau_bar, fit.means.m_hat, fit.jump.window);
  fit.jump.b2_slope = post.slope;
  fit.jump.b2_anchor_value = post.anchor_value;
  fit.jump.sites = fit_jump_params(data, tau_bar, fit.jump, fit.means.m_hat, opt.workers);
  fit.has_jump = true;
  return fit;
}

std::vector<Series> trend_residuals(const StationSet& data, const TrendFit& trend) {
  const StationSet clean = replace_bursts(data, trend.bursts);
  JumpModel jump = trend.jump;
  if (!trend.has_jump) jump.sites.clear();
  return residuals(clean, trend.means, jump);
}

}  // namespace evospec
