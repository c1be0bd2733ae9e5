#pragma once

#include <Eigen/Dense>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace evospec {

/// A location for the intrinsic field: projected km plus covariates.
struct FieldSite {
  double x_km = 0.0;
  double y_km = 0.0;
  double lat = 0.0;
  double elev = 0.0;
};

/// Drift functions. latitude_elevation: [1, lat, elev] (site means);
/// planar: [1, x, y] (jump parameters).
enum class DriftBasis { latitude_elevation, planar };
std::string drift_name(DriftBasis b);
DriftBasis parse_drift(const std::string& s);

Eigen::MatrixXd drift_matrix(DriftBasis basis, const std::vector<FieldSite>& sites);
/// Matrix of pairwise distances (km).
Eigen::MatrixXd distance_matrix(const std::vector<FieldSite>& a, const std::vector<FieldSite>& b);

/// Intrinsic random function with generalized covariance G(d) = -eta d and linear drift.
struct SpatialFieldFit {
  double eta = 0.0;
  Eigen::VectorXd drift_coeffs;
  DriftBasis basis = DriftBasis::planar;
  double reml_loglik = 0.0;
  int dof = 0;
  std::vector<FieldSite> sites;
  Eigen::VectorXd values;
};

/// Restricted log likelihood of the drift-free contrasts at a given eta,
/// using orthonormal contrasts (invariant to the choice of such a basis).
double reml_loglik(const Eigen::VectorXd& values, const std::vector<FieldSite>& sites, DriftBasis basis,
                   double eta);

/// eta by maximizing the restricted likelihood (closed form), drift by GLS.
/// Throws ValidationError for duplicate sites or a rank-deficient drift, and
/// NumericalError when the contrasts vanish (eta unidentified).
SpatialFieldFit reml_fit(const Eigen::VectorXd& values, const std::vector<FieldSite>& sites, DriftBasis basis);

struct KrigingPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd weights;     // n_obs x m, column i reproduces target i
  std::vector<int> coincident; // observed index per target, or -1
};
KrigingPrediction krige_predict(const SpatialFieldFit& fit, const std::vector<FieldSite>& targets);

/// Multivariate t draw around the BLUP with the prediction covariance as
/// scale. An infinite df gives a Gaussian draw. Coincident targets return the
/// observed value exactly.
Eigen::VectorXd conditional_draw(const KrigingPrediction& pred, double df, std::mt19937_64& rng);
Eigen::VectorXd conditional_draw(const SpatialFieldFit& fit, const std::vector<FieldSite>& targets, double df,
                                 std::mt19937_64& rng);

/// Symmetric square root of a PSD matrix; negative eigenvalues are clipped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S, bool* clipped = nullptr);

}  // namespace evospec
