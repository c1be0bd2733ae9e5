#include "evospec/optimizer.hpp"

#include <gsl/gsl_blas.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace evospec {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::stationary: return "stationary";
    case Variant::daynight: return "daynight";
    case Variant::radiation: return "radiation";
  }
  return "full";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "stationary") return Variant::stationary;
  if (s == "daynight") return Variant::daynight;
  if (s == "radiation") return Variant::radiation;
  throw ValidationError("unknown variant '" + s + "' (expected full, stationary, daynight or radiation)");
}

RegimeStage estimate_regimes(const FitData& data, double sunrise_offset, double sunset_offset, double alpha,
                             const SolarClock& clock) {
  const auto& st = data.stations;
  if (data.residuals.size() != st.n()) throw ValidationError("need one residual series per site");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  RegimeStage out;
  auto& lik = out.lik;
  for (const auto& y : data.residuals) {
    if (y.size() != st.T()) throw ValidationError("residual length does not match the radiation series");
    lik.diffs.push_back(partial_difference(y, alpha));
  }
  lik.schedules = make_schedules(st, sunrise_offset, sunset_offset, clock);
  lik.sites = site_geometry(st, clock);

  std::vector<Series> rad;
  std::vector<BlockPartition> parts;
  for (const auto& s : lik.schedules) {
    rad.push_back(s.radiation);
    parts.push_back(s.partition);
  }
  out.prelim = fit_prelim_radiation(lik.diffs, rad);

  std::vector<Series> scaled = lik.diffs;
  for (std::size_t s = 0; s < scaled.size(); ++s)
    for (std::size_t t = 0; t < scaled[s].size(); ++t) scaled[s][t] /= out.prelim.a0 + out.prelim.a1 * rad[s][t];
  const auto avg = average_periodograms(scaled, parts);
  const auto pair = fit_regimes(avg);
  out.month = fit_month_regime(avg);
  out.widened_low_band = pair.widened_low_band;

  auto& evo = out.evo;
  evo.regimes = {pair.day, pair.night};
  evo.weights = initial_weights(2, parts.front().blocks());
  evo.a0 = out.prelim.a0;
  evo.a1 = out.prelim.a1;
  evo.alpha = alpha;
  evo.sunrise_offset = sunrise_offset;
  evo.sunset_offset = sunset_offset;
  evo.clock = clock;
  return out;
}

Parameterization::Parameterization(Variant variant, const EvoSpectrumModel& evo, bool a1_free) : B_(evo.B()) {
  const int K = evo.K();
  switch (variant) {
    case Variant::full:
      groups_.push_back({Slot::a0, {0}});
      if (a1_free) groups_.push_back({Slot::a1, {0}});
      for (int k = 0; k < K; ++k)
        for (int b = 0; b < B_; ++b) groups_.push_back({Slot::weight, {k * B_ + b}});
      break;
    case Variant::stationary:
      groups_.push_back({Slot::a0, {0}});
      break;
    case Variant::daynight: {
      Group day{Slot::weight, {}}, night{Slot::weight, {}};
      for (int k = 0; k < K; ++k)
        for (int b = 0; b < B_; ++b) (BlockPartition::is_day(b) ? day : night).index.push_back(k * B_ + b);
      if (!day.index.empty()) groups_.push_back(day);
      groups_.push_back(night);
      break;
    }
    case Variant::radiation:
      groups_.push_back({Slot::a0, {0}});
      if (a1_free) groups_.push_back({Slot::a1, {0}});
      break;
  }
  for (int i = 0; i < kGammaBasisSize; ++i) groups_.push_back({Slot::gamma, {i}});
}

Eigen::VectorXd Parameterization::pack(const EvoSpectrumModel& evo, const CoherenceModel& coh) const {
  Eigen::VectorXd th(size());
  for (int i = 0; i < size(); ++i) {
    const auto& g = groups_[i];
    const int j = g.index.front();
    double v = 0.0;
    switch (g.slot) {
      case Slot::a0: v = evo.a0; break;
      case Slot::a1: v = evo.a1; break;
      case Slot::weight: v = evo.weights(j / B_, j % B_); break;
      case Slot::gamma: v = coh.gamma_coeffs(j); break;
    }
    if (!(v > 0.0)) throw NumericalError("free parameter must be positive to take its log");
    th(i) = std::log(v);
  }
  return th;
}

void Parameterization::unpack(const Eigen::VectorXd& theta, EvoSpectrumModel& evo, CoherenceModel& coh) const {
  for (int i = 0; i < size(); ++i) {
    const double v = std::exp(theta(i));
    for (int j : groups_[i].index) {
      switch (groups_[i].slot) {
        case Slot::a0: evo.a0 = v; break;
        case Slot::a1: evo.a1 = v; break;
        case Slot::weight: evo.weights(j / B_, j % B_) = v; break;
        case Slot::gamma: coh.gamma_coeffs(j) = v; break;
      }
    }
  }
}

Eigen::VectorXd Parameterization::chain(const LikelihoodGradient& g, const EvoSpectrumModel& evo,
                                        const CoherenceModel& coh) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (int i = 0; i < size(); ++i)
    for (int j : groups_[i].index) {
      switch (groups_[i].slot) {
        case Slot::a0: out(i) += g.a0 * evo.a0; break;
        case Slot::a1: out(i) += g.a1 * evo.a1; break;
        case Slot::weight: out(i) += g.w(j / B_, j % B_) * evo.weights(j / B_, j % B_); break;
        case Slot::gamma: out(i) += g.gamma(j) * coh.gamma_coeffs(j); break;
      }
    }
  return out;
}

CoherenceModel initial_coherence(const std::vector<SiteGeometry>& sites, const SolarClock& clock) {
  std::vector<double> d;
  for (std::size_t a = 0; a < sites.size(); ++a)
    for (std::size_t b = a + 1; b < sites.size(); ++b) {
      const double v = site_distance(sites[a], sites[b]);
      if (v > 0.0) d.push_back(v);
    }
  CoherenceModel coh;
  coh.clock = clock;
  double med = 1.0;
  if (!d.empty()) {
    std::sort(d.begin(), d.end());
    med = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  }
  // The reduced basis sums to one at zero frequency.
  coh.gamma_coeffs.setConstant(med);
  return coh;
}

namespace {

struct Objective {
  const Parameterization* par;
  const LikelihoodData* lik;
  LikelihoodOptions opt;
  EvoSpectrumModel evo;
  CoherenceModel coh;
  int evaluations = 0;
  double best_f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta;
  Eigen::VectorXd last_grad;
  WarmStart warm;

  void set(const gsl_vector* x) {
    Eigen::VectorXd th(par->size());
    for (int i = 0; i < par->size(); ++i) th(i) = gsl_vector_get(x, i);
    par->unpack(th, evo, coh);
  }
  void record(const gsl_vector* x, double f) {
    ++evaluations;
    if (f < best_f) {
      best_f = f;
      best_theta.resize(par->size());
      for (int i = 0; i < par->size(); ++i) best_theta(i) = gsl_vector_get(x, i);
    }
  }
  double value(const gsl_vector* x) {
    try {
      set(x);
      const double f = joint_negloglik(evo, coh, *lik, opt, &warm);
      if (!std::isfinite(f)) return GSL_POSINF;
      record(x, f);
      return f;
    } catch (const NumericalError&) {
      return GSL_POSINF;
    }
  }
  double value_grad(const gsl_vector* x, gsl_vector* g) {
    double f = GSL_POSINF;
    Eigen::VectorXd gl = Eigen::VectorXd::Zero(par->size());
    try {
      set(x);
      const auto lg = negloglik_gradient(evo, coh, *lik, opt, true, &warm);
      if (std::isfinite(lg.value)) {
        f = lg.value;
        gl = par->chain(lg, evo, coh);
        record(x, f);
      }
    } catch (const NumericalError&) {
    }
    for (int i = 0; i < par->size(); ++i) gsl_vector_set(g, i, std::isfinite(gl(i)) ? gl(i) : 0.0);
    last_grad = gl;
    return f;
  }
};

double gsl_f(const gsl_vector* x, void* p) { return static_cast<Objective*>(p)->value(x); }
void gsl_df(const gsl_vector* x, void* p, gsl_vector* g) { static_cast<Objective*>(p)->value_grad(x, g); }
void gsl_fdf(const gsl_vector* x, void* p, double* f, gsl_vector* g) {
  *f = static_cast<Objective*>(p)->value_grad(x, g);
}

struct MinimizerDeleter {
  void operator()(gsl_multimin_fdfminimizer* m) const { gsl_multimin_fdfminimizer_free(m); }
};
struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

}  // namespace

FitResult maximize_likelihood(const RegimeStage& stage, const CoherenceModel& init, const FitOptions& opt,
                              Variant variant) {
  gsl_set_error_handler_off();
  FitResult out;
  out.variant = variant;
  out.prelim = stage.prelim;
  const bool a1_free = stage.evo.a1 > 0.0 && !stage.prelim.a1_unidentified;
  Parameterization par(variant, stage.evo, a1_free);

  Objective obj{&par, &stage.lik, opt.lik, stage.evo, init, 0, std::numeric_limits<double>::infinity(), {}, {}, {}};
  const Eigen::VectorXd theta0 = par.pack(stage.evo, init);
  const int p = par.size();
  std::unique_ptr<gsl_vector, VectorDeleter> x(gsl_vector_alloc(p));
  for (int i = 0; i < p; ++i) gsl_vector_set(x.get(), i, theta0(i));

  const double f0 = obj.value(x.get());
  if (!std::isfinite(f0)) throw NumericalError("negative log likelihood is not finite at the starting point");

  gsl_multimin_function_fdf fn{&gsl_f, &gsl_df, &gsl_fdf, static_cast<std::size_t>(p), &obj};
  std::unique_ptr<gsl_multimin_fdfminimizer, MinimizerDeleter> m(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, p));
  gsl_multimin_fdfminimizer_set(m.get(), &fn, x.get(), 0.1, 0.9);

  auto& cv = out.convergence;
  auto grad_ok = [&](const gsl_vector* g, double f) {
    cv.grad_norm = gsl_blas_dnrm2(g);
    return cv.grad_norm <= opt.grad_tol * (1.0 + std::abs(f));
  };
  if (grad_ok(m->gradient, m->f)) {
    cv.converged = true;
  } else {
    for (cv.iterations = 0; cv.iterations < opt.max_iter;) {
      const int status = gsl_multimin_fdfminimizer_iterate(m.get());
      ++cv.iterations;
      if (grad_ok(m->gradient, m->f)) {
        cv.converged = true;
        break;
      }
      if (status != GSL_SUCCESS) {
        cv.stalled = true;
        cv.status = gsl_strerror(status);
        break;
      }
    }
  }
  if (!cv.converged && !cv.stalled) cv.status = "iteration limit";
  if (cv.converged) cv.status = "converged";
  cv.evaluations = obj.evaluations;

  out.evo = stage.evo;
  out.coh = init;
  par.unpack(obj.best_theta, out.evo, out.coh);
  // Report the value of an independent evaluation at the returned point.
  out.negloglik = joint_negloglik(out.evo, out.coh, stage.lik, opt.lik);
  if (!std::isfinite(out.negloglik)) throw NumericalError("negative log likelihood is not finite at the optimum");
  if (opt.hessian) out.hessian = weight_hessian(out.evo, out.coh, stage.lik, opt.lik);
  return out;
}

Eigen::MatrixXd weight_hessian(const EvoSpectrumModel& evo, const CoherenceModel& coh, const LikelihoodData& lik,
                               const LikelihoodOptions& opt, double step) {
  const int K = evo.K(), B = evo.B();
  const int p = 2 + K * B;
  auto log_grad = [&](const EvoSpectrumModel& e) {
    const auto g = negloglik_gradient(e, coh, lik, opt, false);
    Eigen::VectorXd v(p);
    v(0) = g.a0 * e.a0;
    v(1) = g.a1 * e.a1;
    for (int k = 0; k < K; ++k)
      for (int b = 0; b < B; ++b) v(2 + k * B + b) = g.w(k, b) * e.weights(k, b);
    return v;
  };
  auto scaled = [&](int i, double f) {
    EvoSpectrumModel e = evo;
    if (i == 0)
      e.a0 *= f;
    else if (i == 1)
      e.a1 *= f;
    else
      e.weights((i - 2) / B, (i - 2) % B) *= f;
    return e;
  };
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    if (i == 1 && evo.a1 == 0.0) continue;
    const Eigen::VectorXd gp = log_grad(scaled(i, std::exp(step)));
    const Eigen::VectorXd gm = log_grad(scaled(i, std::exp(-step)));
    H.col(i) = (gp - gm) / (2.0 * step);
  }
  if (evo.a1 == 0.0) H.row(1).setZero();
  return 0.5 * (H + H.transpose());
}

FitResult fit_model(const FitData& data, double sunrise_offset, double sunset_offset, double alpha,
                    const FitOptions& opt) {
  const RegimeStage stage = estimate_regimes(data, sunrise_offset, sunset_offset, alpha, opt.clock);
  return maximize_likelihood(stage, initial_coherence(stage.lik.sites, opt.clock), opt, Variant::full);
}

FitResult fit_variant(const FitData& data, Variant variant, double sunrise_offset, double sunset_offset,
                      const FitOptions& opt, double alpha) {
  if (variant == Variant::full) return fit_model(data, sunrise_offset, sunset_offset, alpha, opt);
  RegimeStage stage = estimate_regimes(data, sunrise_offset, sunset_offset, alpha, opt.clock);
  auto& evo = stage.evo;
  const int B = evo.B();
  evo.regimes = {stage.month};
  evo.weights = Eigen::MatrixXd::Ones(1, B);
  const double a0 = stage.prelim.a0, a1 = stage.prelim.a1;
  switch (variant) {
    case Variant::stationary:
      evo.a1 = 0.0;
      break;
    case Variant::daynight: {
      // Start each level at the mean preliminary scale over its blocks.
      std::vector<double> sum(B, 0.0), cnt(B, 0.0);
      for (const auto& s : stage.lik.schedules)
        for (std::size_t t = 0; t < s.block.size(); ++t) {
          sum[s.block[t]] += a0 + a1 * s.radiation[t];
          cnt[s.block[t]] += 1.0;
        }
      double day = 0, dn = 0, night = 0, nn = 0;
      for (int b = 0; b < B; ++b) {
        (BlockPartition::is_day(b) ? day : night) += sum[b];
        (BlockPartition::is_day(b) ? dn : nn) += cnt[b];
      }
      for (int b = 0; b < B; ++b)
        evo.weights(0, b) = BlockPartition::is_day(b) ? (dn > 0 ? day / dn : a0) : (nn > 0 ? night / nn : a0);
      evo.a0 = 1.0;
      evo.a1 = 0.0;
      break;
    }
    case Variant::radiation:
    case Variant::full:
      break;
  }
  FitOptions o = opt;
  o.hessian = false;
  return maximize_likelihood(stage, initial_coherence(stage.lik.sites, opt.clock), o, variant);
}

void finalize_table(GridSearchTable& table) {
  bool any = false;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& v = table.rows[i].negloglik;
    if (v && (!any || *v < *table.rows[table.best].negloglik)) {
      table.best = i;
      any = true;
    }
  }
  if (!any) throw NumericalError("every grid cell failed");
  const double best = *table.rows[table.best].negloglik;
  for (auto& r : table.rows)
    r.delta_thousands = r.negloglik ? (*r.negloglik - best) / 1000.0 : std::numeric_limits<double>::quiet_NaN();
}

std::vector<std::pair<double, double>> offset_grid(const std::vector<double>& sunrise,
                                                   const std::vector<double>& sunset) {
  std::vector<std::pair<double, double>> g;
  for (double a : sunrise)
    for (double b : sunset) g.emplace_back(a, b);
  return g;
}

GridSearchTable grid_search_offsets(const FitData& data, const std::vector<std::pair<double, double>>& grid,
                                    double alpha, const FitOptions& opt) {
  if (grid.empty()) throw ValidationError("offset grid is empty");
  GridSearchTable table;
  table.rows.resize(grid.size());
  FitOptions cell = opt;
  cell.hessian = false;
  if (opt.workers > 1) cell.lik.workers = 1;
  parallel_for(grid.size(), opt.workers, [&](std::size_t i) {
    auto& row = table.rows[i];
    row.sunrise = grid[i].first;
    row.sunset = grid[i].second;
    try {
      row.negloglik = fit_model(data, row.sunrise, row.sunset, alpha, cell).negloglik;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  finalize_table(table);
  return table;
}

RefinedOffsets refine_quadratic(const GridSearchTable& table) {
  if (table.rows.empty()) throw ValidationError("empty grid table");
  const auto& best = table.rows[table.best];
  RefinedOffsets out{best.sunrise, best.sunset, true, ""};

  auto min_step = [&](auto coord) {
    double step = std::numeric_limits<double>::infinity();
    for (const auto& r : table.rows) {
      const double d = std::abs(coord(r) - coord(best));
      if (r.negloglik && d > 1e-9) step = std::min(step, d);
    }
    return step;
  };
  const double hx = min_step([](const GridRow& r) { return r.sunrise; });
  const double hy = min_step([](const GridRow& r) { return r.sunset; });
  if (!std::isfinite(hx) || !std::isfinite(hy)) {
    out.reason = "grid has a single row or column";
    return out;
  }

  std::vector<Eigen::Vector3d> pts;
  for (const auto& r : table.rows) {
    if (!r.negloglik) continue;
    const double dx = (r.sunrise - best.sunrise) / hx, dy = (r.sunset - best.sunset) / hy;
    if (std::abs(dx) <= 1.0 + 1e-9 && std::abs(dy) <= 1.0 + 1e-9) pts.emplace_back(dx, dy, r.delta_thousands);
  }
  if (pts.size() < 6) {
    out.reason = "fewer than 6 points near the best cell";
    return out;
  }
  Eigen::MatrixXd X(pts.size(), 6);
  Eigen::VectorXd y(pts.size());
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double a = pts[i](0), b = pts[i](1);
    X.row(i) << 1, a, b, a * a, a * b, b * b;
    y(i) = pts[i](2);
    xlo = std::min(xlo, a), xhi = std::max(xhi, a), ylo = std::min(ylo, b), yhi = std::max(yhi, b);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 6) {
    out.reason = "neighbourhood does not determine a quadratic";
    return out;
  }
  const Eigen::VectorXd c = qr.solve(y);
  Eigen::Matrix2d H;
  H << 2 * c(3), c(4), c(4), 2 * c(5);
  if (!(H(0, 0) > 0 && H.determinant() > 0)) {
    out.reason = "quadratic is not convex";
    return out;
  }
  const Eigen::Vector2d v = H.partialPivLu().solve(Eigen::Vector2d(-c(1), -c(2)));
  const double tol = 1e-9;
  if (v(0) < xlo - tol || v(0) > xhi + tol || v(1) < ylo - tol || v(1) > yhi + tol) {
    out.reason = "stationary point outside the neighbourhood";
    return out;
  }
  out.sunrise = best.sunrise + v(0) * hx;
  out.sunset = best.sunset + v(1) * hy;
  out.fallback = false;
  return out;
}

AlphaCurve grid_search_alpha(const FitData& data, const std::vector<double>& alphas, double sunrise_offset,
                             double sunset_offset, const FitOptions& opt) {
  if (alphas.empty()) throw ValidationError("alpha grid is empty");
  AlphaCurve c;
  c.alphas = alphas;
  c.negloglik.resize(alphas.size());
  FitOptions cell = opt;
  cell.hessian = false;
  if (opt.workers > 1) cell.lik.workers = 1;
  parallel_for(alphas.size(), opt.workers, [&](std::size_t i) {
    try {
      c.negloglik[i] = fit_model(data, sunrise_offset, sunset_offset, alphas[i], cell).negloglik;
    } catch (const std::exception&) {
    }
  });
  bool any = false;
  for (std::size_t i = 0; i < alphas.size(); ++i)
    if (c.negloglik[i] && (!any || *c.negloglik[i] < *c.negloglik[c.best])) {
      c.best = i;
      any = true;
    }
  if (!any) throw NumericalError("every alpha cell failed");
  c.best_alpha = alphas[c.best];
  for (const auto& v : c.negloglik)
    c.delta.push_back(v ? *v - *c.negloglik[c.best] : std::numeric_limits<double>::quiet_NaN());
  return c;
}

}  // namespace evospec
