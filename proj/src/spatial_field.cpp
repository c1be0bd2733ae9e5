#include "evospec/spatial_field.hpp"

#include <cmath>

#include "evospec/common.hpp"

namespace evospec {

std::string drift_name(DriftBasis b) {
  return b == DriftBasis::planar ? "planar" : "latitude_elevation";
}

DriftBasis parse_drift(const std::string& s) {
  if (s == "planar") return DriftBasis::planar;
  if (s == "latitude_elevation") return DriftBasis::latitude_elevation;
  throw ValidationError("unknown drift basis '" + s + "'");
}

Eigen::MatrixXd drift_matrix(DriftBasis basis, const std::vector<FieldSite>& sites) {
  Eigen::MatrixXd F(static_cast<Eigen::Index>(sites.size()), 3);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& s = sites[i];
    if (basis == DriftBasis::planar)
      F.row(i) << 1.0, s.x_km, s.y_km;
    else
      F.row(i) << 1.0, s.lat, s.elev;
  }
  return F;
}

Eigen::MatrixXd distance_matrix(const std::vector<FieldSite>& a, const std::vector<FieldSite>& b) {
  Eigen::MatrixXd D(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) D(i, j) = std::hypot(a[i].x_km - b[j].x_km, a[i].y_km - b[j].y_km);
  return D;
}

namespace {

void check_sites(const std::vector<FieldSite>& sites, const Eigen::MatrixXd& F) {
  for (std::size_t i = 0; i < sites.size(); ++i)
    for (std::size_t j = i + 1; j < sites.size(); ++j)
      if (sites[i].x_km == sites[j].x_km && sites[i].y_km == sites[j].y_km)
        throw ValidationError("duplicate site location in spatial field");
  if (F.rows() <= F.cols()) throw ValidationError("spatial field needs more sites than drift terms");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F);
  if (qr.rank() < F.cols()) throw ValidationError("drift basis is not identifiable at these sites");
}

// Orthonormal basis of the complement of span(F).
Eigen::MatrixXd contrasts(const Eigen::MatrixXd& F) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(F);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(F.rows(), F.rows());
  return Q.rightCols(F.rows() - F.cols());
}

struct ContrastForm {
  double quad = 0.0;    // W' M^-1 W
  double logdet = 0.0;  // log det M
  int m = 0;
};

ContrastForm contrast_form(const Eigen::VectorXd& values, const std::vector<FieldSite>& sites, DriftBasis basis) {
  const Eigen::MatrixXd F = drift_matrix(basis, sites);
  check_sites(sites, F);
  const Eigen::MatrixXd Q = contrasts(F);
  const Eigen::MatrixXd M = Q.transpose() * (-distance_matrix(sites, sites)) * Q;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw NumericalError("contrast covariance is not positive definite");
  const Eigen::VectorXd W = Q.transpose() * values;
  ContrastForm cf;
  cf.m = static_cast<int>(Q.cols());
  cf.quad = W.dot(llt.solve(W));
  for (Eigen::Index i = 0; i < M.rows(); ++i) cf.logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return cf;
}

double loglik_from(const ContrastForm& cf, double eta) {
  return -0.5 * (cf.m * std::log(2.0 * kPi) + cf.m * std::log(eta) + cf.logdet + cf.quad / eta);
}

}  // namespace

double reml_loglik(const Eigen::VectorXd& values, const std::vector<FieldSite>& sites, DriftBasis basis,
                   double eta) {
  if (!(eta > 0.0)) throw ValidationError("eta must be positive");
  return loglik_from(contrast_form(values, sites, basis), eta);
}

SpatialFieldFit reml_fit(const Eigen::VectorXd& values, const std::vector<FieldSite>& sites, DriftBasis basis) {
  if (values.size() != static_cast<Eigen::Index>(sites.size()))
    throw ValidationError("one value per site is required");
  const ContrastForm cf = contrast_form(values, sites, basis);
  SpatialFieldFit fit;
  fit.basis = basis;
  fit.sites = sites;
  fit.values = values;
  fit.dof = cf.m;
  fit.eta = cf.quad / cf.m;
  if (!(fit.eta > 1e-24 * std::max(1.0, values.squaredNorm())))
    throw NumericalError("contrasts vanish: values are exactly in the drift space, eta is unidentified");
  fit.reml_loglik = loglik_from(cf, fit.eta);

  // Dual kriging system [K F; F' 0][a; beta] = [y; 0] gives the GLS drift.
  const Eigen::MatrixXd F = drift_matrix(basis, sites);
  const auto n = F.rows(), p = F.cols();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n + p, n + p);
  S.topLeftCorner(n, n) = -fit.eta * distance_matrix(sites, sites);
  S.topRightCorner(n, p) = F;
  S.bottomLeftCorner(p, n) = F.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p);
  rhs.head(n) = values;
  fit.drift_coeffs = S.fullPivLu().solve(rhs).tail(p);
  return fit;
}

KrigingPrediction krige_predict(const SpatialFieldFit& fit, const std::vector<FieldSite>& targets) {
  const Eigen::MatrixXd F = drift_matrix(fit.basis, fit.sites);
  const Eigen::MatrixXd F0 = drift_matrix(fit.basis, targets);
  const auto n = F.rows(), p = F.cols();
  const auto m = static_cast<Eigen::Index>(targets.size());
  const Eigen::MatrixXd K = -fit.eta * distance_matrix(fit.sites, fit.sites);
  const Eigen::MatrixXd k0 = -fit.eta * distance_matrix(fit.sites, targets);
  const Eigen::MatrixXd G00 = -fit.eta * distance_matrix(targets, targets);

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n + p, n + p);
  S.topLeftCorner(n, n) = K;
  S.topRightCorner(n, p) = F;
  S.bottomLeftCorner(p, n) = F.transpose();
  Eigen::MatrixXd rhs(n + p, m);
  rhs.topRows(n) = k0;
  rhs.bottomRows(p) = F0.transpose();

  KrigingPrediction out;
  out.weights = S.fullPivLu().solve(rhs).topRows(n);
  out.coincident.assign(targets.size(), -1);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index s = 0; s < n; ++s)
      if (targets[i].x_km == fit.sites[s].x_km && targets[i].y_km == fit.sites[s].y_km) {
        out.weights.col(i).setZero();
        out.weights(s, i) = 1.0;
        out.coincident[i] = static_cast<int>(s);
      }
  const Eigen::MatrixXd& L = out.weights;
  out.mean = L.transpose() * fit.values;
  out.cov = G00 - L.transpose() * k0 - k0.transpose() * L + L.transpose() * K * L;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  for (Eigen::Index i = 0; i < m; ++i)
    if (out.coincident[i] >= 0) {
      out.cov.row(i).setZero();
      out.cov.col(i).setZero();
    }
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S, bool* clipped) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  Eigen::VectorXd ev = es.eigenvalues();
  bool neg = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) < 0.0) {
      neg = neg || ev(i) < -1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
      ev(i) = 0.0;
    }
  if (clipped) *clipped = neg;
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

Eigen::VectorXd conditional_draw(const KrigingPrediction& pred, double df, std::mt19937_64& rng) {
  if (!(df >= 1.0)) throw ValidationError("degrees of freedom must be at least 1");
  std::normal_distribution<double> nd;
  const auto m = pred.mean.size();
  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) z(i) = nd(rng);
  double scale = 1.0;
  if (std::isfinite(df)) {
    std::chi_squared_distribution<double> chi(df);
    scale = std::sqrt(df / chi(rng));
  }
  Eigen::VectorXd out = pred.mean + scale * (psd_sqrt(pred.cov) * z);
  for (Eigen::Index i = 0; i < m; ++i)
    if (pred.coincident[i] >= 0) out(i) = pred.mean(i);
  return out;
}

Eigen::VectorXd conditional_draw(const SpatialFieldFit& fit, const std::vector<FieldSite>& targets, double df,
                                 std::mt19937_64& rng) {
  return conditional_draw(krige_predict(fit, targets), df, rng);
}

}  // namespace evospec
