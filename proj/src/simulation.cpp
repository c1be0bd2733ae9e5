#include "evospec/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "evospec/fft.hpp"

namespace evospec {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t i) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PerturbedWeights perturb_weights(const FitResult& fit, std::mt19937_64& rng, double scale) {
  const int K = fit.evo.K(), B = fit.evo.B();
  const int p = 2 + K * B;
  if (fit.hessian.rows() != p || fit.hessian.cols() != p)
    throw ValidationError("fit has no Hessian over (a0, a1, w); refit with the Hessian enabled");
  PerturbedWeights out;
  out.evo = fit.evo;
  out.log_shift = Eigen::VectorXd::Zero(K * B);

  // Direction along which the likelihood is flat: w up, (a0, a1) down.
  Eigen::VectorXd ray = Eigen::VectorXd::Ones(p);
  ray(0) = -1.0;
  ray(1) = fit.evo.a1 > 0.0 ? -1.0 : 0.0;
  ray.normalize();
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(p, p) - ray * ray.transpose();
  const Eigen::MatrixXd H = P * fit.hessian * P;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  std::normal_distribution<double> nd;
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(p);
  const double floor = std::max(1e-10 * top, kMinIdentifiedCurvature);
  for (int i = 0; i < p; ++i) {
    const double z = nd(rng);
    if (ev(i) < -1e-8 * top) out.projected = true;
    if (ev(i) <= 1e-10 * top) continue;
    if (ev(i) < floor) {
      ++out.unidentified;
      continue;
    }
    delta += (scale * z / std::sqrt(ev(i))) * es.eigenvectors().col(i);
  }
  for (int k = 0; k < K; ++k)
    for (int b = 0; b < B; ++b) {
      const double d = delta(2 + k * B + b);
      out.log_shift(k * B + b) = d;
      out.evo.weights(k, b) *= std::exp(d);
    }
  return out;
}

namespace {

cplx complex_normal(std::normal_distribution<double>& nd, std::mt19937_64& rng) {
  const double a = nd(rng), b = nd(rng);
  return {a * std::sqrt(0.5), b * std::sqrt(0.5)};
}

bool same_place(const SiteGeometry& a, const SiteGeometry& b) { return site_distance(a, b) == 0.0; }

Eigen::MatrixXcd hermitian_sqrt(const Eigen::MatrixXcd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (S + S.adjoint()));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
}

// Draw from N(0, S) (complex circular or real).
Eigen::VectorXcd normal_draw(const Eigen::MatrixXcd& S, bool real_valued, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  const auto m = S.rows();
  Eigen::VectorXcd e(m);
  if (real_valued) {
    for (Eigen::Index i = 0; i < m; ++i) e(i) = nd(rng);
    const Eigen::MatrixXd R = hermitian_sqrt(S.real().cast<cplx>()).real();
    return (R * e.real()).cast<cplx>();
  }
  for (Eigen::Index i = 0; i < m; ++i) e(i) = complex_normal(nd, rng);
  return hermitian_sqrt(S) * e;
}

// Representative index for each site: first site at the same place.
std::vector<std::size_t> representatives(const std::vector<SiteGeometry>& sites) {
  std::vector<std::size_t> rep(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    rep[i] = i;
    for (std::size_t j = 0; j < i; ++j)
      if (same_place(sites[i], sites[j])) {
        rep[i] = rep[j];
        break;
      }
  }
  return rep;
}

Eigen::LLT<Eigen::MatrixXcd> robust_llt(Eigen::MatrixXcd R) {
  Eigen::LLT<Eigen::MatrixXcd> llt(R);
  if (llt.info() != Eigen::Success) {
    R.diagonal().array() += 1e-10;
    llt.compute(R);
    if (llt.info() != Eigen::Success) throw NumericalError("coherence matrix is not positive definite");
  }
  return llt;
}

}  // namespace

Eigen::VectorXcd conditional_fourier_draw(const CoherenceModel& coh, double omega,
                                          const std::vector<SiteGeometry>& observed, const Eigen::VectorXcd& z_obs,
                                          const std::vector<SiteGeometry>& targets, bool real_valued,
                                          std::mt19937_64& rng) {
  if (std::abs(omega) > kPi + 1e-12) throw ValidationError("frequency outside [-pi, pi]");
  if (z_obs.size() != static_cast<Eigen::Index>(observed.size()))
    throw ValidationError("one observed coefficient per observed site is required");
  const auto m = static_cast<Eigen::Index>(targets.size());
  Eigen::VectorXcd out(m);
  std::vector<SiteGeometry> free;
  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index i = 0; i < m; ++i) {
    int hit = -1;
    for (std::size_t s = 0; s < observed.size() && hit < 0; ++s)
      if (same_place(targets[i], observed[s])) hit = static_cast<int>(s);
    if (hit >= 0) {
      out(i) = z_obs(hit);
    } else {
      free.push_back(targets[i]);
      free_idx.push_back(i);
    }
  }
  if (free.empty()) return out;

  const auto n = static_cast<Eigen::Index>(observed.size());
  const auto u = static_cast<Eigen::Index>(free.size());
  Eigen::VectorXcd draw;
  if (std::abs(omega) > coh.omega0() || n == 0) {
    // Only coincident targets would be coherent here.
    draw = normal_draw(coherence_matrix(coh, free, omega), real_valued, rng);
  } else {
    std::vector<SiteGeometry> all = observed;
    all.insert(all.end(), free.begin(), free.end());
    const Eigen::MatrixXcd S = coherence_matrix(coh, all, omega);
    const auto llt = robust_llt(S.topLeftCorner(n, n));
    const Eigen::MatrixXcd Suo = S.bottomLeftCorner(u, n);
    const Eigen::MatrixXcd A = llt.solve(Suo.adjoint());          // Soo^-1 Sou
    Eigen::VectorXcd mean = A.adjoint() * z_obs;
    Eigen::MatrixXcd cov = S.bottomRightCorner(u, u) - Suo * A;
    if (real_valued) {
      mean = mean.real().cast<cplx>();
      cov = cov.real().cast<cplx>();
    }
    draw = mean + normal_draw(cov, real_valued, rng);
  }
  for (Eigen::Index i = 0; i < u; ++i) out(free_idx[i]) = draw(i);
  return out;
}

std::vector<Series> simulate_residuals(const EvoSpectrumModel& evo, const CoherenceModel& coh,
                                       const std::vector<SiteGeometry>& sites,
                                       const std::vector<SiteSchedule>& schedules, std::mt19937_64& rng) {
  if (sites.size() != schedules.size()) throw ValidationError("need one schedule per site");
  if (sites.empty()) return {};
  const std::size_t n = sites.size(), T = schedules.front().block.size();
  const auto rep = representatives(sites);
  std::vector<SiteGeometry> uniq;
  std::vector<std::size_t> slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rep[i] == i) {
      slot[i] = uniq.size();
      uniq.push_back(sites[i]);
    } else {
      slot[i] = slot[rep[i]];
    }
  }
  std::vector<CSeries> z(uniq.size(), CSeries(T));
  std::normal_distribution<double> nd;
  for (std::size_t j = 0; j <= T / 2; ++j) {
    const bool real_valued = j == 0 || 2 * j == T;
    const double omega = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(T);
    Eigen::VectorXcd w(static_cast<Eigen::Index>(uniq.size()));
    if (omega > coh.omega0()) {
      for (auto& c : w) c = real_valued ? cplx(nd(rng)) : complex_normal(nd, rng);
    } else {
      Eigen::MatrixXcd R = coherence_matrix(coh, uniq, omega);
      if (real_valued) R = R.real().cast<cplx>();
      const auto llt = robust_llt(R);
      Eigen::VectorXcd e(w.size());
      for (auto& c : e) c = real_valued ? cplx(nd(rng)) : complex_normal(nd, rng);
      w = llt.matrixL() * e;
      if (real_valued) w = w.real().cast<cplx>();
    }
    for (std::size_t s = 0; s < uniq.size(); ++s) {
      z[s][j] = w(static_cast<Eigen::Index>(s));
      if (j > 0 && !real_valued) z[s][T - j] = std::conj(z[s][j]);
    }
  }
  const RegimeTable table = make_regime_table(evo.regimes, T);
  std::vector<Series> out;
  for (std::size_t i = 0; i < n; ++i) {
    SiteOperator op(evo, schedules[i], table);
    const auto x = op.apply(z[slot[i]]);
    Series d(T);
    for (std::size_t t = 0; t < T; ++t) d[t] = x[t].real();
    out.push_back(undifference(d, evo.alpha, d[0]));
  }
  return out;
}

StationSet simulate_unconditional(const EvoSpectrumModel& evo, const CoherenceModel& coh, const TrendFit& trend,
                                  const StationSet& layout, std::mt19937_64& rng) {
  StationSet out = layout;
  const std::size_t T = layout.T();
  if (trend.means.m_hat.size() != T) throw ValidationError("trend length does not match the layout");
  const auto sites = site_geometry(layout, evo.clock);
  const auto schedules = make_schedules(layout, evo.sunrise_offset, evo.sunset_offset, evo.clock);
  const auto Y = simulate_residuals(evo, coh, sites, schedules, rng);
  for (auto& r : out.records) r.temps.assign(T, 0.0);
  const auto base = residuals(out, trend.means, trend.has_jump ? trend.jump : JumpModel{});
  for (std::size_t k = 0; k < out.n(); ++k)
    for (std::size_t t = 0; t < T; ++t) out.records[k].temps[t] = -base[k][t] + Y[k][t];
  return out;
}

std::vector<FieldSite> field_sites(const StationSet& data, const std::vector<std::string>& ids) {
  std::vector<FieldSite> out;
  for (const auto& id : ids) {
    const auto k = data.find(id);
    if (!k) throw ValidationError("unknown site " + id);
    const auto& r = data.records[*k];
    out.push_back(field_site(data, r.lon, r.lat, r.elev));
  }
  return out;
}

FieldSite field_site(const StationSet& data, double lon, double lat, double elev) {
  const auto xy = project_km(lon, lat, data.central_lon, data.central_lat);
  return {xy[0], xy[1], lat, elev};
}

namespace {

double site_phase(const StationSet& data, const SolarClock& clock, double lon, double lat) {
  return local_phase_offset(clock, lon, data.central_lon) + clock.theta * clock.phi[1] * (lat - data.central_lat);
}

}  // namespace

ConditionalEnsemble simulate_conditional(const FitResult& fit, const TrendFit& trend, const StationSet& data,
                                         const std::vector<TargetSite>& targets, const SimulationOptions& opt) {
  const auto& evo = fit.evo;
  if (evo.alpha >= 1.0 && !opt.allow_unit_alpha)
    throw ValidationError("alpha = 1 makes undifferenced simulations drift; pass the override to proceed");
  if (opt.n_sims < 1) throw ValidationError("n_sims must be positive");
  if (targets.empty()) throw ValidationError("no target sites");
  const std::size_t T = data.T(), n = data.n(), m = targets.size();

  const StationSet clean = replace_bursts(data, trend.bursts);
  const auto Y = residuals(clean, trend.means, trend.has_jump ? trend.jump : JumpModel{});
  std::vector<Series> diffs;
  for (const auto& y : Y) diffs.push_back(partial_difference(y, evo.alpha));
  const auto obs_sites = site_geometry(data, evo.clock);
  const auto obs_sched = make_schedules(data, evo.sunrise_offset, evo.sunset_offset, evo.clock);

  ConditionalEnsemble ens;
  ens.targets = targets;
  const Series r = smooth_radiation(data.radiation);
  std::vector<SiteGeometry> tgt_sites;
  std::vector<FieldSite> tgt_field;
  std::vector<int> coincident(m, -1);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& t = targets[i];
    const double phase = site_phase(data, evo.clock, t.lon, t.lat);
    const auto xy = project_km(t.lon, t.lat, data.central_lon, data.central_lat);
    tgt_sites.push_back({t.id, xy[0], xy[1], phase});
    tgt_field.push_back({xy[0], xy[1], t.lat, t.elev});
    ens.schedules.push_back(make_schedule(data.days, T, r, evo.sunrise_offset, evo.sunset_offset, phase));
    for (std::size_t s = 0; s < n && coincident[i] < 0; ++s)
      if (site_distance(tgt_sites[i], obs_sites[s]) == 0.0) coincident[i] = static_cast<int>(s);
  }

  // Spatial mean field and jump-parameter fields from the observed sites.
  std::vector<std::string> ids;
  Eigen::VectorXd s_vals(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    ids.push_back(data.records[k].site_id);
    s_vals(k) = 0.0;
    for (std::size_t i = 0; i < trend.means.site_ids.size(); ++i)
      if (trend.means.site_ids[i] == ids[k]) s_vals(k) = trend.means.s[i];
  }
  const auto s_fit = reml_fit(s_vals, field_sites(data, ids), DriftBasis::latitude_elevation);
  const auto s_pred = krige_predict(s_fit, tgt_field);

  std::vector<KrigingPrediction> jump_pred;
  std::vector<double> jump_df;
  if (trend.has_jump) {
    std::vector<std::string> jids;
    std::vector<Eigen::VectorXd> cols(3);
    std::vector<double> tau, logD, loginv;
    for (const auto& p : trend.jump.sites)
      if (!p.flagged) {
        jids.push_back(p.id);
        tau.push_back(p.tau);
        logD.push_back(std::log(p.D));
        loginv.push_back(std::log(1.0 / p.lambda));
      }
    const auto fs = field_sites(data, jids);
    for (const auto* v : {&tau, &logD, &loginv}) {
      const auto f = reml_fit(Eigen::Map<const Eigen::VectorXd>(v->data(), static_cast<Eigen::Index>(v->size())),
                              fs, DriftBasis::planar);
      jump_pred.push_back(krige_predict(f, tgt_field));
      jump_df.push_back(f.dof);
    }
  }

  ens.draws.assign(m, std::vector<Series>(opt.n_sims));
  ens.seeds.resize(opt.n_sims);
  ens.weights.resize(opt.n_sims);
  LikelihoodOptions lik = opt.lik;
  lik.workers = 1;
  parallel_for(static_cast<std::size_t>(opt.n_sims), opt.workers, [&](std::size_t d) {
    ens.seeds[d] = stream_seed(opt.seed, d);
    std::mt19937_64 rng(ens.seeds[d]);
    EvoSpectrumModel ev = evo;
    if (opt.perturb) ev = perturb_weights(fit, rng, opt.weight_scale).evo;
    ens.weights[d] = ev.weights;
    const RegimeTable table = make_regime_table(ev.regimes, T);

    std::vector<CSeries> z_obs(n);
    for (std::size_t s = 0; s < n; ++s) {
      SiteOperator op(ev, obs_sched[s], table);
      z_obs[s] = ct_solve(op, diffs[s], lik.tol, lik.max_iter).z;
    }
    std::vector<CSeries> z_tgt(m, CSeries(T));
    Eigen::VectorXcd zj(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j <= T / 2; ++j) {
      const bool real_valued = j == 0 || 2 * j == T;
      for (std::size_t s = 0; s < n; ++s) zj(s) = z_obs[s][j];
      const double omega = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(T);
      const auto w = conditional_fourier_draw(fit.coh, omega, obs_sites, zj, tgt_sites, real_valued, rng);
      for (std::size_t i = 0; i < m; ++i) {
        z_tgt[i][j] = w(static_cast<Eigen::Index>(i));
        if (j > 0 && !real_valued) z_tgt[i][T - j] = std::conj(z_tgt[i][j]);
      }
    }

    const Eigen::VectorXd s_draw = conditional_draw(s_pred, s_fit.dof, rng);
    std::vector<Eigen::VectorXd> jd;
    for (std::size_t q = 0; q < jump_pred.size(); ++q) jd.push_back(conditional_draw(jump_pred[q], jump_df[q], rng));

    for (std::size_t i = 0; i < m; ++i) {
      auto& path = ens.draws[i][d];
      if (coincident[i] >= 0) {
        path = data.records[coincident[i]].temps;
        continue;
      }
      SiteOperator op(ev, ens.schedules[i], table);
      const auto x = op.apply(z_tgt[i]);
      Series dd(T);
      for (std::size_t t = 0; t < T; ++t) dd[t] = x[t].real();
      path = undifference(dd, ev.alpha, 0.0);
      Series J(T, 0.0);
      if (trend.has_jump)
        J = jump_series(trend.jump, jd[0](i), std::exp(jd[1](i)), std::exp(-jd[2](i)), trend.means.m_hat);
      for (std::size_t t = 0; t < T; ++t) path[t] += trend.means.m_hat[t] + s_draw(i) + J[t];
    }
  });
  for (std::size_t i = 0; i < m; ++i) ens.bands.push_back(quantile_bands(ens.draws[i], opt.level));
  return ens;
}

Bands quantile_bands(const std::vector<Series>& draws, double level) {
  if (draws.size() < 2) throw ValidationError("quantile bands need at least two draws");
  if (!(level > 0.0 && level <= 1.0)) throw ValidationError("band level must lie in (0, 1]");
  const std::size_t T = draws.front().size(), N = draws.size();
  Bands b{Series(T), Series(T)};
  std::vector<double> col(N);
  auto q7 = [&](double p) {
    const double h = (static_cast<double>(N) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, N - 1);
    return col[lo] + (h - static_cast<double>(lo)) * (col[hi] - col[lo]);
  };
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) col[i] = draws[i][t];
    std::sort(col.begin(), col.end());
    b.lower[t] = q7((1.0 - level) / 2.0);
    b.upper[t] = q7((1.0 + level) / 2.0);
  }
  return b;
}

namespace {

WidthStats width_stats(const std::vector<double>& w) {
  WidthStats s;
  s.count = w.size();
  if (w.empty()) return s;
  for (double v : w) s.mean += v;
  s.mean /= static_cast<double>(w.size());
  if (w.size() > 1) {
    for (double v : w) s.sd += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(w.size() - 1));
  }
  return s;
}

}  // namespace

CoverageReport evaluate_coverage(const Bands& bands, const Series& truth, const BlockPartition& partition) {
  const std::size_t T = truth.size();
  if (bands.lower.size() != T || bands.upper.size() != T) throw ValidationError("bands and truth differ in length");
  CoverageReport rep;
  std::vector<double> all, day, night;
  std::size_t inside = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (truth[t] >= bands.lower[t] && truth[t] <= bands.upper[t]) ++inside;
    const double w = bands.upper[t] - bands.lower[t];
    all.push_back(w);
    (BlockPartition::is_day(partition.block_of(static_cast<double>(t))) ? day : night).push_back(w);
  }
  rep.coverage = T ? static_cast<double>(inside) / static_cast<double>(T) : 0.0;
  rep.overall = width_stats(all);
  rep.day = width_stats(day);
  rep.night = width_stats(night);
  return rep;
}

StationSet synthetic_layout(const std::vector<SiteLayout>& sites, std::size_t central, std::size_t T,
                            double sunrise, double sunset, double peak_radiation) {
  if (central >= sites.size()) throw ValidationError("central site index out of range");
  StationSet d;
  for (const auto& s : sites) d.records.push_back({s.id, s.lon, s.lat, s.elev, Series(T, 0.0)});
  d.central_id = sites[central].id;
  d.central_lon = sites[central].lon;
  d.central_lat = sites[central].lat;
  const std::size_t days = (T + kMinutesPerDay - 1) / kMinutesPerDay;
  for (std::size_t k = 0; k < days; ++k) d.days.push_back({sunrise, sunset});
  d.radiation.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double tod = static_cast<double>(t % kMinutesPerDay);
    if (tod > sunrise && tod < sunset)
      d.radiation[t] = peak_radiation * std::sin(kPi * (tod - sunrise) / (sunset - sunrise));
  }
  return d;
}

Regime regime_from_function(const std::function<double(double)>& log_mu) {
  const auto& basis = regime_basis();
  std::vector<double> xs;
  for (int i = 0; i <= 400; ++i) xs.push_back(2.0 * i / 400.0);
  for (int i = 1; i <= 1600; ++i) xs.push_back(2.0 + 718.0 * i / 1600.0);
  Eigen::MatrixXd X(xs.size(), kRegimeBasisSize);
  Eigen::VectorXd y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    X.row(i) = basis.evaluate(xs[i]).transpose();
    y(i) = log_mu(xs[i]);
  }
  Regime r;
  r.coeffs = X.colPivHouseholderQr().solve(y);
  return r;
}

SyntheticTruth make_scenario(const ScenarioOptions& opt) {
  if (opt.n_sites < 1) throw ValidationError("need at least one site");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> nd;

  std::vector<SiteLayout> layout;
  const double lon0 = -120.0, lat0 = 37.0;
  layout.push_back({"S00", lon0, lat0, 100.0});
  for (int i = 1; i < opt.n_sites; ++i) {
    const std::string id = (i < 10 ? "S0" : "S") + std::to_string(i);
    layout.push_back({id, lon0 + 0.35 * u(rng), lat0 + 0.3 * u(rng), 150.0 + 120.0 * u(rng)});
  }
  SyntheticTruth truth;
  truth.data = synthetic_layout(layout, 0, opt.T);
  const auto& st = truth.data;

  const double root_t = std::sqrt(static_cast<double>(opt.T));
  auto& evo = truth.evo;
  // The regimes agree below a few cycles/day, where day and night share the
  // synoptic variability; the day regime carries the inflation above that.
  const double lift = std::log(opt.day_inflation);
  evo.regimes = {
      regime_from_function([&](double f) {
        return std::log(0.05 / root_t) + lift * f * f / (f * f + 16.0) - 0.15 * std::log1p(f * f / 100.0);
      }),
      regime_from_function([&](double f) { return std::log(0.05 / root_t) - 0.45 * std::log1p(f * f / 4.0); }),
  };
  if (opt.common_shape) evo.regimes[1] = evo.regimes[0];
  evo.alpha = opt.alpha;
  evo.sunrise_offset = opt.sunrise_offset;
  evo.sunset_offset = opt.sunset_offset;
  evo.a0 = 1.0;
  const double rmax = *std::max_element(st.radiation.begin(), st.radiation.end());
  evo.a1 = rmax > 0 ? opt.radiation_gain / rmax : 0.0;
  const int B = block_partition(st.days, st.T(), opt.sunrise_offset, opt.sunset_offset, 0.0).blocks();
  evo.weights.resize(2, B);
  for (int b = 0; b < B; ++b) {
    const double jitter = std::exp(0.2 * u(rng));
    if (BlockPartition::is_day(b)) {
      evo.weights(0, b) = jitter;
      evo.weights(1, b) = 0.1;
    } else {
      evo.weights(0, b) = 0.1;
      evo.weights(1, b) = jitter;
    }
  }
  truth.coh.gamma_coeffs << 60.0, 50.0, 35.0, 20.0, 10.0;

  // Trend: diurnal mean; site offsets are the lat/elevation drift plus a
  // Levy-Brownian field, whose variogram is linear with slope field_eta.
  auto& tr = truth.trend;
  tr.means.m_hat.resize(opt.T);
  for (std::size_t t = 0; t < opt.T; ++t) {
    const double tod = static_cast<double>(t % kMinutesPerDay);
    tr.means.m_hat[t] = 14.0 + 7.0 * std::sin(2.0 * kPi * (tod - 600.0) / kMinutesPerDay) + 0.3 * t / 1440.0;
  }
  const auto fs = field_sites(st, [&] {
    std::vector<std::string> ids;
    for (const auto& r : st.records) ids.push_back(r.site_id);
    return ids;
  }());
  const auto n = static_cast<Eigen::Index>(fs.size());
  const Eigen::MatrixXd Dxy = distance_matrix(fs, fs);
  const std::vector<FieldSite> origin{fs.front()};
  const Eigen::VectorXd r0 = distance_matrix(fs, origin).col(0);
  Eigen::MatrixXd C(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) C(i, j) = opt.field_eta * (r0(i) + r0(j) - Dxy(i, j));
  Eigen::VectorXd e(n);
  for (auto& v : e) v = nd(rng);
  const Eigen::VectorXd field = psd_sqrt(C) * e;
  for (std::size_t k = 0; k < fs.size(); ++k) {
    tr.means.site_ids.push_back(st.records[k].site_id);
    tr.means.s.push_back(field(k) - 0.0065 * fs[k].elev + 0.8 * (fs[k].lat - lat0));
  }
  tr.jump.window.jump_day = static_cast<int>(std::min<std::size_t>(2, st.days.size()));
  if (opt.jump) {
    tr.has_jump = true;
    auto& J = tr.jump;
    J.b1.assign(tr.means.m_hat.begin() + J.window.begin(),
                tr.means.m_hat.begin() + std::min(J.window.end(), opt.T));
    J.b2_anchor_value = J.window.anchor() < opt.T ? tr.means.m_hat[J.window.anchor()] : tr.means.m_hat.back();
    for (std::size_t k = 0; k < fs.size(); ++k)
      J.sites.push_back({st.records[k].site_id,
                         static_cast<double>(J.window.begin()) + 700.0 + 3.0 * fs[k].x_km + 5.0 * nd(rng),
                         6.0 + 0.03 * fs[k].y_km + 0.5 * nd(rng), 0.25 * std::exp(0.2 * nd(rng)), false});
  }

  std::mt19937_64 noise(stream_seed(opt.seed, 1000));
  const auto sites = site_geometry(st, evo.clock);
  const auto schedules = make_schedules(st, evo.sunrise_offset, evo.sunset_offset, evo.clock);
  truth.residuals = simulate_residuals(evo, truth.coh, sites, schedules, noise);
  const auto base = residuals(truth.data, tr.means, tr.has_jump ? tr.jump : JumpModel{});
  for (std::size_t k = 0; k < st.n(); ++k)
    for (std::size_t t = 0; t < opt.T; ++t) truth.data.records[k].temps[t] = -base[k][t] + truth.residuals[k][t];
  return truth;
}

}  // namespace evospec
