#pragma once

#include <Eigen/Dense>
#include <vector>

namespace evospec {

/// Clamped B-spline basis of a given degree on [left, right] with the given
/// interior knots. Basis count = interior knots + degree + 1.
class BSplineBasis {
 public:
  BSplineBasis(double left, double right, std::vector<double> interior, int degree = 3);

  int size() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  double left() const { return knots_.front(); }
  double right() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }

  /// All basis values (or their `order`-th derivatives) at x, clamped to [left, right].
  Eigen::VectorXd evaluate(double x, int order = 0) const;

 private:
  Eigen::VectorXd values(double x, int degree) const;
  Eigen::VectorXd derivs(double x, int degree, int order) const;

  std::vector<double> knots_;
  int degree_;
};

/// A B-spline basis restricted by a linear map: reduced function i is
/// sum_r combo(r, i) * B_r. Used to impose boundary derivative conditions.
class ConstrainedSpline {
 public:
  ConstrainedSpline(BSplineBasis raw, Eigen::MatrixXd combo);

  int size() const { return static_cast<int>(combo_.cols()); }
  const BSplineBasis& raw() const { return raw_; }
  Eigen::VectorXd evaluate(double x, int order = 0) const;
  double value(const Eigen::VectorXd& coeffs, double x, int order = 0) const {
    return evaluate(x, order).dot(coeffs);
  }

 private:
  BSplineBasis raw_;
  Eigen::MatrixXd combo_;
};

/// Log-amplitude basis for a spectral regime: cubic, knots
/// (1/3, 2/3, 1, 4/3, 5/3, 2, 4, 8, 12, 24, 60, 120, 360) cycles/day on
/// [0, 720] cycles/day (720 cpd = pi rad/min), zero slope at both ends.
/// 15 functions; the first 8 are the ones supported below 2 cycles/day.
const ConstrainedSpline& regime_basis();
inline constexpr int kRegimeBasisSize = 15;
inline constexpr int kRegimeLowFrequencyCount = 8;

/// Coherence-range basis: cubic on [0, 48] cycles/day, interior knots
/// (1, 3, 6, 12, 24), zero slope at 0, value/slope/curvature zero at 48.
const ConstrainedSpline& gamma_basis();
inline constexpr int kGammaBasisSize = 5;
inline constexpr double kCoherenceCutoffCpd = 48.0;

}  // namespace evospec
