#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "evospec/bspline.hpp"
#include "evospec/evo_spectrum.hpp"

namespace evospec {

/// gamma(omega) in km: B-spline in cycles/day, zero beyond the cutoff.
/// Spatial coherence exp(-d / gamma(omega)) with a frequency-proportional phase.
struct CoherenceModel {
  Eigen::VectorXd gamma_coeffs = Eigen::VectorXd::Ones(kGammaBasisSize);
  double omega0_cpd = kCoherenceCutoffCpd;
  SolarClock clock;

  double gamma(double omega) const;
  double omega0() const { return cpd_to_rad(omega0_cpd); }
};

/// Site location in km (for distances) and phase in minutes (for the phase factor).
struct SiteGeometry {
  std::string id;
  double x_km = 0.0;
  double y_km = 0.0;
  double phase = 0.0;
};

double site_distance(const SiteGeometry& a, const SiteGeometry& b);

/// Entry (l, m) = exp(-|u_l - u_m| / gamma(omega)) * exp(-i omega (phase_l - phase_m)).
/// Pairs at distance zero are fully coherent at every frequency.
Eigen::MatrixXcd coherence_matrix(const CoherenceModel& coh, const std::vector<SiteGeometry>& sites,
                                  double omega);

/// mu_k(omega_j) at the Fourier frequencies of a length-T series.
struct RegimeTable {
  std::size_t T = 0;
  std::vector<Series> mu;
};
RegimeTable make_regime_table(const std::vector<Regime>& regimes, std::size_t T);

/// C_T(A) for one site as a fast operator: K inverse FFTs plus diagonal scalings.
class SiteOperator {
 public:
  SiteOperator(const EvoSpectrumModel& model, const SiteSchedule& schedule, const RegimeTable& table);

  std::size_t T() const { return T_; }
  int K() const { return static_cast<int>(mod_.size()); }
  /// (C v)(t) = sum_j A(t, omega_j) exp(i omega_j t) v_j
  CSeries apply(const CSeries& v) const;
  /// (C^H u)_j = sum_t A(t, omega_j) exp(-i omega_j t) u_t
  CSeries apply_adjoint(const CSeries& u) const;
  double amplitude(std::size_t t, std::size_t j) const;
  double scale(std::size_t t) const { return scale_[t]; }
  /// backward(mu_k o v): the per-regime inverse transforms used by apply.
  std::vector<CSeries> regime_transforms(const CSeries& v) const;

  // Stationary approximation g(t) p(omega_j) of A, exact for uniformly modulated models.
  const Series& precond_time() const { return g_; }
  const Series& precond_freq() const { return p_; }

 private:
  std::size_t T_;
  const RegimeTable* table_;
  Series scale_;
  std::vector<Series> mod_;  // mod_[k][t] = scale(t) * w(k, block(t))
  Series g_, p_;
};

CSeries ct_matvec(const SiteOperator& op, const CSeries& v);

struct SolveResult {
  CSeries z;
  double residual = 0.0;
  int iterations = 0;
};

/// z with ||C z - x|| / ||x|| <= tol, via preconditioned CGLS. Real x gives
/// conjugate-symmetric z. Throws NumericalError past max_iter.
/// `guess` (optional) is a starting value for z.
SolveResult ct_solve(const SiteOperator& op, const Series& x, double tol = 1e-8, int max_iter = 500,
                     const CSeries* guess = nullptr);
/// Solves C^H lambda = u.
SolveResult ct_solve_adjoint(const SiteOperator& op, const CSeries& u, double tol = 1e-8, int max_iter = 500,
                             const CSeries* guess = nullptr);

/// Time-averaged log-amplitude surrogate for log|det C_T(A)|:
/// (T/2) log T + (1/T) sum_t sum_j log A(t, omega_j).
double logdet_approx(const SiteOperator& op);

struct LikelihoodData {
  std::vector<Series> diffs;               // partial differences per site
  std::vector<SiteSchedule> schedules;
  std::vector<SiteGeometry> sites;

  std::size_t n() const { return diffs.size(); }
  std::size_t T() const { return diffs.empty() ? 0 : diffs.front().size(); }
};

/// Geometry of every site in a station set (km about the central site, phases).
std::vector<SiteGeometry> site_geometry(const StationSet& data, const SolarClock& clock);

struct LikelihoodOptions {
  double tol = 1e-8;
  int max_iter = 500;
  unsigned workers = 1;
  double fd_step = 1e-4;
};

/// Previous solutions per site, used as starting values by the next
/// evaluation. Only affects iteration counts, not the converged answer.
struct WarmStart {
  std::vector<CSeries> z;
  std::vector<CSeries> lambda;
};

struct Decorrelation {
  std::vector<CSeries> z;
  double logdet = 0.0;
  int max_iterations = 0;
};
Decorrelation decorrelate(const EvoSpectrumModel& evo, const RegimeTable& table, const LikelihoodData& data,
                          const LikelihoodOptions& opt = {}, WarmStart* warm = nullptr);

struct FrequencyTerm {
  double value = 0.0;          // 1/2 sum_half w_j [log det R_j + z_j^H R_j^-1 z_j]
  std::vector<CSeries> u;      // R_j^-1 z_j per site over the full spectrum (if requested)
  int jittered = 0;
};
FrequencyTerm frequency_term(const CoherenceModel& coh, const std::vector<SiteGeometry>& sites,
                             const std::vector<CSeries>& z, bool want_u);

double joint_negloglik(const EvoSpectrumModel& evo, const CoherenceModel& coh, const LikelihoodData& data,
                       const LikelihoodOptions& opt = {}, WarmStart* warm = nullptr);

struct LikelihoodGradient {
  double value = 0.0;
  double a0 = 0.0;
  double a1 = 0.0;
  Eigen::MatrixXd w;           // K x B
  Eigen::VectorXd gamma;       // finite differences
};
/// Analytic partials in the natural parameters (a0, a1, w); central finite
/// differences for the gamma coefficients.
LikelihoodGradient negloglik_gradient(const EvoSpectrumModel& evo, const CoherenceModel& coh,
                                      const LikelihoodData& data, const LikelihoodOptions& opt = {},
                                      bool with_gamma = true, WarmStart* warm = nullptr);

}  // namespace evospec
