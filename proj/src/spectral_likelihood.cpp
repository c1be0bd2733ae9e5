#include "evospec/spectral_likelihood.hpp"

#include <cmath>
#include <numeric>

#include "evospec/fft.hpp"

namespace evospec {

double CoherenceModel::gamma(double omega) const {
  double w = std::fmod(std::abs(omega), 2.0 * kPi);
  if (w > kPi) w = 2.0 * kPi - w;
  const double c = rad_to_cpd(w);
  if (c >= omega0_cpd) return 0.0;
  return std::max(0.0, gamma_basis().value(gamma_coeffs, c));
}

double site_distance(const SiteGeometry& a, const SiteGeometry& b) {
  return std::hypot(a.x_km - b.x_km, a.y_km - b.y_km);
}

Eigen::MatrixXcd coherence_matrix(const CoherenceModel& coh, const std::vector<SiteGeometry>& sites,
                                  double omega) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXcd R = Eigen::MatrixXcd::Identity(n, n);
  const double g = coh.gamma(omega);
  for (Eigen::Index l = 0; l < n; ++l)
    for (Eigen::Index m = l + 1; m < n; ++m) {
      const double d = site_distance(sites[l], sites[m]);
      double mag = 0.0;
      if (d == 0.0)
        mag = 1.0;
      else if (g > 0.0)
        mag = std::exp(-d / g);
      if (mag == 0.0) continue;
      const cplx v = mag * std::polar(1.0, -omega * (sites[l].phase - sites[m].phase));
      R(l, m) = v;
      R(m, l) = std::conj(v);
    }
  return R;
}

RegimeTable make_regime_table(const std::vector<Regime>& regimes, std::size_t T) {
  RegimeTable tab;
  tab.T = T;
  for (const auto& r : regimes) {
    Series mu(T);
    // Symmetric in j <-> T - j; evaluate the half and mirror.
    for (std::size_t j = 0; j <= T / 2; ++j) {
      mu[j] = r(folded_frequency(j, T));
      if (j > 0) mu[T - j] = mu[j];
    }
    tab.mu.push_back(std::move(mu));
  }
  return tab;
}

SiteOperator::SiteOperator(const EvoSpectrumModel& model, const SiteSchedule& schedule, const RegimeTable& table)
    : T_(table.T), table_(&table) {
  if (schedule.block.size() != T_) throw ValidationError("schedule length does not match T");
  if (static_cast<int>(table.mu.size()) != model.K()) throw ValidationError("regime table does not match K");
  const int K = model.K();
  scale_.resize(T_);
  mod_.assign(K, Series(T_));
  for (std::size_t t = 0; t < T_; ++t) {
    scale_[t] = model.a0 + model.a1 * schedule.radiation[t];
    const int b = schedule.block[t];
    if (b >= model.B()) throw ValidationError("schedule has more blocks than the model has weights");
    for (int k = 0; k < K; ++k) mod_[k][t] = scale_[t] * model.weights(k, b);
  }

  // Preconditioner: g(t) = RMS over frequency of A(t, .), p_j = sum_k mu_k(j) c_k.
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K, K);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) {
      double s = 0.0;
      for (std::size_t j = 0; j < T_; ++j) s += table.mu[k][j] * table.mu[l][j];
      G(k, l) = s / static_cast<double>(T_);
    }
  g_.resize(T_);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(K);
  for (std::size_t t = 0; t < T_; ++t) {
    Eigen::VectorXd m(K);
    for (int k = 0; k < K; ++k) m(k) = mod_[k][t];
    g_[t] = std::sqrt(std::max(m.dot(G * m), 1e-300));
    c += m / g_[t];
  }
  c /= static_cast<double>(T_);
  p_.assign(T_, 0.0);
  for (std::size_t j = 0; j < T_; ++j)
    for (int k = 0; k < K; ++k) p_[j] += table.mu[k][j] * c(k);
}

double SiteOperator::amplitude(std::size_t t, std::size_t j) const {
  double a = 0.0;
  for (int k = 0; k < K(); ++k) a += mod_[k][t] * table_->mu[k][j];
  return a;
}

std::vector<CSeries> SiteOperator::regime_transforms(const CSeries& v) const {
  std::vector<CSeries> out;
  CSeries tmp(T_);
  for (int k = 0; k < K(); ++k) {
    for (std::size_t j = 0; j < T_; ++j) tmp[j] = table_->mu[k][j] * v[j];
    out.push_back(fft::backward(tmp));
  }
  return out;
}

CSeries SiteOperator::apply(const CSeries& v) const {
  CSeries out(T_, cplx(0.0));
  const auto y = regime_transforms(v);
  for (int k = 0; k < K(); ++k)
    for (std::size_t t = 0; t < T_; ++t) out[t] += mod_[k][t] * y[k][t];
  return out;
}

CSeries SiteOperator::apply_adjoint(const CSeries& u) const {
  CSeries out(T_, cplx(0.0));
  CSeries tmp(T_);
  for (int k = 0; k < K(); ++k) {
    for (std::size_t t = 0; t < T_; ++t) tmp[t] = mod_[k][t] * u[t];
    const auto f = fft::forward(tmp);
    for (std::size_t j = 0; j < T_; ++j) out[j] += table_->mu[k][j] * f[j];
  }
  return out;
}

CSeries ct_matvec(const SiteOperator& op, const CSeries& v) {
  if (v.size() != op.T()) throw ValidationError("ct_matvec: vector length does not match T");
  return op.apply(v);
}

namespace {

double norm2(const CSeries& v) {
  double s = 0.0;
  for (const auto& c : v) s += std::norm(c);
  return s;
}

// Conjugate gradient on the normal equations of M y = b, with M = op * Pinv.
template <class Op, class OpH>
SolveResult cgls(const Op& M, const OpH& MH, const CSeries& b, const CSeries& y0, double tol, int max_iter,
                 const char* what) {
  const double bnorm = std::sqrt(norm2(b));
  SolveResult res;
  CSeries y = y0;
  if (bnorm == 0.0) {
    res.z.assign(b.size(), cplx(0.0));
    return res;
  }
  CSeries r = M(y);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  for (int restart = 0; restart < 3; ++restart) {
    double rel = std::sqrt(norm2(r)) / bnorm;
    if (rel <= tol) break;
    CSeries s = MH(r);
    CSeries p = s;
    double gamma = norm2(s);
    while (res.iterations < max_iter && rel > tol) {
      const CSeries q = M(p);
      const double qq = norm2(q);
      if (qq == 0.0) break;
      const double a = gamma / qq;
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += a * p[i];
        r[i] -= a * q[i];
      }
      ++res.iterations;
      rel = std::sqrt(norm2(r)) / bnorm;
      s = MH(r);
      const double gnew = norm2(s);
      const double beta = gnew / gamma;
      gamma = gnew;
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = s[i] + beta * p[i];
    }
    // Recompute the true residual; recursion drift can hide a stall.
    r = M(y);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    if (res.iterations >= max_iter) break;
  }
  res.residual = std::sqrt(norm2(r)) / bnorm;
  if (what && res.residual > tol)
    throw NumericalError(std::string(what) + ": iteration cap reached with relative residual " +
                         std::to_string(res.residual));
  res.z = std::move(y);
  return res;
}

void symmetrize(CSeries& z) {
  const std::size_t T = z.size();
  if (T == 0) return;
  z[0] = cplx(z[0].real(), 0.0);
  for (std::size_t j = 1; j <= T / 2; ++j) {
    const cplx avg = 0.5 * (z[j] + std::conj(z[T - j]));
    z[j] = avg;
    z[T - j] = std::conj(avg);
  }
  if (T % 2 == 0) z[T / 2] = cplx(z[T / 2].real(), 0.0);
}

}  // namespace

SolveResult ct_solve(const SiteOperator& op, const Series& x, double tol, int max_iter, const CSeries* guess) {
  const std::size_t T = op.T();
  if (x.size() != T) throw ValidationError("ct_solve: vector length does not match T");
  const auto& g = op.precond_time();
  const auto& p = op.precond_freq();
  const double invT = 1.0 / static_cast<double>(T);
  // Pinv y = diag(1/p) F^-1 diag(1/g) y, with F^-1 = forward / T.
  auto Pinv = [&](const CSeries& y) {
    CSeries tmp(T);
    for (std::size_t t = 0; t < T; ++t) tmp[t] = y[t] / g[t];
    auto f = fft::forward(tmp);
    for (std::size_t j = 0; j < T; ++j) f[j] *= invT / p[j];
    return f;
  };
  auto PinvH = [&](const CSeries& w) {
    CSeries tmp(T);
    for (std::size_t j = 0; j < T; ++j) tmp[j] = w[j] / p[j];
    auto b = fft::backward(tmp);
    for (std::size_t t = 0; t < T; ++t) b[t] *= invT / g[t];
    return b;
  };
  auto M = [&](const CSeries& y) { return op.apply(Pinv(y)); };
  auto MH = [&](const CSeries& r) { return PinvH(op.apply_adjoint(r)); };
  const CSeries b(x.begin(), x.end());
  CSeries y0 = b;
  if (guess && guess->size() == T) {
    // y = P z = g o backward(p o z)
    CSeries tmp(T);
    for (std::size_t j = 0; j < T; ++j) tmp[j] = (*guess)[j] * p[j];
    y0 = fft::backward(tmp);
    for (std::size_t t = 0; t < T; ++t) y0[t] *= g[t];
  }
  SolveResult res = cgls(M, MH, b, y0, tol, max_iter, "ct_solve");
  res.z = Pinv(res.z);
  symmetrize(res.z);
  return res;
}

SolveResult ct_solve_adjoint(const SiteOperator& op, const CSeries& u, double tol, int max_iter,
                             const CSeries* guess) {
  const std::size_t T = op.T();
  if (u.size() != T) throw ValidationError("ct_solve_adjoint: vector length does not match T");
  const auto& g = op.precond_time();
  const auto& p = op.precond_freq();
  const double invT = 1.0 / static_cast<double>(T);
  // Left preconditioning with P^-H keeps the singular values of the forward
  // problem: P^-H C^H = (C P^-1)^H.
  auto PinvH = [&](const CSeries& w) {
    CSeries tmp(T);
    for (std::size_t j = 0; j < T; ++j) tmp[j] = w[j] / p[j];
    auto b = fft::backward(tmp);
    for (std::size_t t = 0; t < T; ++t) b[t] *= invT / g[t];
    return b;
  };
  auto Pinv = [&](const CSeries& y) {
    CSeries tmp(T);
    for (std::size_t t = 0; t < T; ++t) tmp[t] = y[t] / g[t];
    auto f = fft::forward(tmp);
    for (std::size_t j = 0; j < T; ++j) f[j] *= invT / p[j];
    return f;
  };
  auto L = [&](const CSeries& lam) { return PinvH(op.apply_adjoint(lam)); };
  auto LH = [&](const CSeries& r) { return op.apply(Pinv(r)); };
  const double unorm = std::sqrt(norm2(u));
  const CSeries b = PinvH(u);
  SolveResult res;
  res.z = guess && guess->size() == T ? *guess : b;
  double inner = 0.1 * tol;
  for (int round = 0; round < 4; ++round) {
    const SolveResult step = cgls(L, LH, b, res.z, inner, max_iter - res.iterations, nullptr);
    res.z = step.z.empty() ? res.z : step.z;
    res.iterations += step.iterations;
    auto r = op.apply_adjoint(res.z);
    for (std::size_t j = 0; j < T; ++j) r[j] -= u[j];
    res.residual = unorm > 0 ? std::sqrt(norm2(r)) / unorm : 0.0;
    if (res.residual <= tol || res.iterations >= max_iter) break;
    inner *= 0.1;
  }
  if (res.residual > tol)
    throw NumericalError("ct_solve_adjoint: iteration cap reached with relative residual " +
                         std::to_string(res.residual));
  return res;
}

namespace {

// Per-block sums over the Fourier frequencies, shared by all sites:
// logM[b] = sum_j log M_b(omega_j), ratio(k, b) = sum_j mu_k(j) / M_b(j).
struct BlockSpectra {
  std::vector<double> logM;
  Eigen::MatrixXd ratio;
};

BlockSpectra block_spectra(const EvoSpectrumModel& model, const RegimeTable& table) {
  const int K = model.K(), B = model.B();
  BlockSpectra bs{std::vector<double>(B, 0.0), Eigen::MatrixXd::Zero(K, B)};
  const std::size_t T = table.T;
  for (int b = 0; b < B; ++b) {
    double lm = 0.0;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(K);
    for (std::size_t j = 0; j < T; ++j) {
      double M = 0.0;
      for (int k = 0; k < K; ++k) M += model.weights(k, b) * table.mu[k][j];
      lm += std::log(M);
      for (int k = 0; k < K; ++k) r(k) += table.mu[k][j] / M;
    }
    bs.logM[b] = lm;
    bs.ratio.col(b) = r;
  }
  return bs;
}

double site_logdet(const SiteOperator& op, const SiteSchedule& sch, const BlockSpectra& bs) {
  const std::size_t T = op.T();
  double v = 0.5 * static_cast<double>(T) * std::log(static_cast<double>(T));
  std::vector<double> count(bs.logM.size(), 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    v += std::log(op.scale(t));
    count[sch.block[t]] += 1.0;
  }
  for (std::size_t b = 0; b < count.size(); ++b) v += count[b] / static_cast<double>(T) * bs.logM[b];
  return v;
}

}  // namespace

double logdet_approx(const SiteOperator& op) {
  const std::size_t T = op.T();
  double v = 0.5 * static_cast<double>(T) * std::log(static_cast<double>(T));
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < T; ++j) s += std::log(op.amplitude(t, j));
    v += s / static_cast<double>(T);
  }
  return v;
}

std::vector<SiteGeometry> site_geometry(const StationSet& data, const SolarClock& clock) {
  std::vector<SiteGeometry> out;
  const auto phases = site_phases(data, clock);
  for (std::size_t k = 0; k < data.n(); ++k) {
    const auto& r = data.records[k];
    const auto xy = project_km(r.lon, r.lat, data.central_lon, data.central_lat);
    out.push_back({r.site_id, xy[0], xy[1], phases[k]});
  }
  return out;
}

Decorrelation decorrelate(const EvoSpectrumModel& evo, const RegimeTable& table, const LikelihoodData& data,
                          const LikelihoodOptions& opt, WarmStart* warm) {
  const std::size_t n = data.n();
  Decorrelation out;
  out.z.resize(n);
  std::vector<double> ld(n);
  std::vector<int> its(n);
  const BlockSpectra bs = block_spectra(evo, table);
  if (warm) warm->z.resize(n);
  parallel_for(n, opt.workers, [&](std::size_t s) {
    SiteOperator op(evo, data.schedules[s], table);
    auto res = ct_solve(op, data.diffs[s], opt.tol, opt.max_iter, warm ? &warm->z[s] : nullptr);
    if (warm) warm->z[s] = res.z;
    out.z[s] = std::move(res.z);
    its[s] = res.iterations;
    ld[s] = site_logdet(op, data.schedules[s], bs);
  });
  for (std::size_t s = 0; s < n; ++s) {
    out.logdet += ld[s];
    out.max_iterations = std::max(out.max_iterations, its[s]);
  }
  return out;
}

FrequencyTerm frequency_term(const CoherenceModel& coh, const std::vector<SiteGeometry>& sites,
                             const std::vector<CSeries>& z, bool want_u) {
  FrequencyTerm out;
  const std::size_t n = z.size();
  if (n == 0) return out;
  const std::size_t T = z.front().size();
  if (want_u) out.u.assign(n, CSeries(T));
  bool coincident = false;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (site_distance(sites[a], sites[b]) == 0.0) coincident = true;

  const double omega0 = coh.omega0();
  Eigen::VectorXcd zj(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j <= T / 2; ++j) {
    const double w = (j == 0 || 2 * j == T) ? 1.0 : 2.0;
    const double omega = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(T);
    for (std::size_t s = 0; s < n; ++s) zj(static_cast<Eigen::Index>(s)) = z[s][j];
    Eigen::VectorXcd uj;
    double term = 0.0;
    if (omega <= omega0 || coincident) {
      Eigen::MatrixXcd R = coherence_matrix(coh, sites, omega);
      Eigen::LLT<Eigen::MatrixXcd> llt(R);
      if (llt.info() != Eigen::Success) {
        R.diagonal().array() += 1e-10;
        llt.compute(R);
        ++out.jittered;
        if (llt.info() != Eigen::Success) throw NumericalError("coherence matrix is not positive definite");
      }
      double logdet = 0.0;
      for (Eigen::Index i = 0; i < R.rows(); ++i) logdet += 2.0 * std::log(std::real(llt.matrixLLT()(i, i)));
      uj = llt.solve(zj);
      term = logdet + std::real(zj.dot(uj));
    } else {
      uj = zj;
      term = zj.squaredNorm();
    }
    out.value += 0.5 * w * term;
    if (want_u) {
      for (std::size_t s = 0; s < n; ++s) {
        out.u[s][j] = uj(static_cast<Eigen::Index>(s));
        if (j > 0 && 2 * j != T) out.u[s][T - j] = std::conj(uj(static_cast<Eigen::Index>(s)));
      }
    }
  }
  return out;
}

double joint_negloglik(const EvoSpectrumModel& evo, const CoherenceModel& coh, const LikelihoodData& data,
                       const LikelihoodOptions& opt, WarmStart* warm) {
  const RegimeTable table = make_regime_table(evo.regimes, data.T());
  const Decorrelation dec = decorrelate(evo, table, data, opt, warm);
  const FrequencyTerm ft = frequency_term(coh, data.sites, dec.z, false);
  const double nT = static_cast<double>(data.n() * data.T());
  return 0.5 * nT * std::log(2.0 * kPi) + dec.logdet + ft.value;
}

LikelihoodGradient negloglik_gradient(const EvoSpectrumModel& evo, const CoherenceModel& coh,
                                      const LikelihoodData& data, const LikelihoodOptions& opt, bool with_gamma,
                                      WarmStart* warm) {
  const std::size_t n = data.n(), T = data.T();
  const int K = evo.K(), B = evo.B();
  const RegimeTable table = make_regime_table(evo.regimes, T);
  const Decorrelation dec = decorrelate(evo, table, data, opt, warm);
  const FrequencyTerm ft = frequency_term(coh, data.sites, dec.z, true);
  if (warm) warm->lambda.resize(n);
  const double nT = static_cast<double>(n * T);

  LikelihoodGradient out;
  out.value = 0.5 * nT * std::log(2.0 * kPi) + dec.logdet + ft.value;
  out.w = Eigen::MatrixXd::Zero(K, B);
  const BlockSpectra bs = block_spectra(evo, table);

  std::vector<double> ga0(n, 0.0), ga1(n, 0.0);
  std::vector<Eigen::MatrixXd> gw(n, Eigen::MatrixXd::Zero(K, B));
  parallel_for(n, opt.workers, [&](std::size_t s) {
    const auto& sch = data.schedules[s];
    SiteOperator op(evo, sch, table);
    // Log-determinant part.
    std::vector<double> count(B, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double sc = op.scale(t);
      ga0[s] += 1.0 / sc;
      ga1[s] += sch.radiation[t] / sc;
      count[sch.block[t]] += 1.0;
    }
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < K; ++k) gw[s](k, b) += count[b] / static_cast<double>(T) * bs.ratio(k, b);

    // Quadratic part: -Re lambda^H (dC) z with C^H lambda = u.
    const auto lam =
        ct_solve_adjoint(op, ft.u[s], opt.tol, opt.max_iter, warm ? &warm->lambda[s] : nullptr).z;
    if (warm) warm->lambda[s] = lam;
    const auto y = op.regime_transforms(dec.z[s]);
    for (std::size_t t = 0; t < T; ++t) {
      const int b = sch.block[t];
      cplx mix(0.0);
      for (int k = 0; k < K; ++k) mix += evo.weights(k, b) * y[k][t];
      const cplx cl = std::conj(lam[t]);
      ga0[s] -= std::real(cl * mix);
      ga1[s] -= std::real(cl * sch.radiation[t] * mix);
      const double sc = op.scale(t);
      for (int k = 0; k < K; ++k) gw[s](k, b) -= std::real(cl * sc * y[k][t]);
    }
  });
  for (std::size_t s = 0; s < n; ++s) {
    out.a0 += ga0[s];
    out.a1 += ga1[s];
    out.w += gw[s];
  }

  out.gamma = Eigen::VectorXd::Zero(kGammaBasisSize);
  if (with_gamma) {
    for (int i = 0; i < kGammaBasisSize; ++i) {
      CoherenceModel hi = coh, lo = coh;
      const double h = opt.fd_step * std::max(std::abs(coh.gamma_coeffs(i)), 1e-8);
      hi.gamma_coeffs(i) += h;
      lo.gamma_coeffs(i) -= h;
      const double fh = frequency_term(hi, data.sites, dec.z, false).value;
      const double fl = frequency_term(lo, data.sites, dec.z, false).value;
      out.gamma(i) = (fh - fl) / (2.0 * h);
    }
  }
  return out;
}

}  // namespace evospec
