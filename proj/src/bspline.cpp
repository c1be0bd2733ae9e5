#include "evospec/bspline.hpp"

#include <algorithm>
#include <stdexcept>

namespace evospec {

BSplineBasis::BSplineBasis(double left, double right, std::vector<double> interior, int degree)
    : degree_(degree) {
  if (!(left < right)) throw std::invalid_argument("BSplineBasis: empty domain");
  if (!std::is_sorted(interior.begin(), interior.end()))
    throw std::invalid_argument("BSplineBasis: interior knots must be sorted");
  knots_.assign(static_cast<std::size_t>(degree + 1), left);
  for (double k : interior) {
    if (k <= left || k >= right) throw std::invalid_argument("BSplineBasis: interior knot outside domain");
    knots_.push_back(k);
  }
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), right);
}

Eigen::VectorXd BSplineBasis::values(double x, int degree) const {
  const int m = static_cast<int>(knots_.size());
  x = std::clamp(x, knots_.front(), knots_.back());
  // Degree-0 indicators on half-open spans; the right end belongs to the last
  // non-degenerate span.
  Eigen::VectorXd n = Eigen::VectorXd::Zero(m - 1);
  int span = -1;
  for (int i = 0; i + 1 < m; ++i) {
    if (knots_[i] < knots_[i + 1] && x >= knots_[i] && x < knots_[i + 1]) {
      span = i;
      break;
    }
  }
  if (span < 0) {
    for (int i = m - 2; i >= 0; --i)
      if (knots_[i] < knots_[i + 1]) {
        span = i;
        break;
      }
  }
  n(span) = 1.0;
  for (int d = 1; d <= degree; ++d) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(m - 1 - d);
    for (int i = 0; i < m - 1 - d; ++i) {
      double v = 0.0;
      const double l = knots_[i + d] - knots_[i];
      const double r = knots_[i + d + 1] - knots_[i + 1];
      if (l > 0) v += (x - knots_[i]) / l * n(i);
      if (r > 0) v += (knots_[i + d + 1] - x) / r * n(i + 1);
      next(i) = v;
    }
    n = std::move(next);
  }
  return n;
}

Eigen::VectorXd BSplineBasis::derivs(double x, int degree, int order) const {
  if (order == 0) return values(x, degree);
  const Eigen::VectorXd lower = derivs(x, degree - 1, order - 1);
  const int count = static_cast<int>(knots_.size()) - degree - 1;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(count);
  for (int i = 0; i < count; ++i) {
    const double l = knots_[i + degree] - knots_[i];
    const double r = knots_[i + degree + 1] - knots_[i + 1];
    double v = 0.0;
    if (l > 0) v += degree / l * lower(i);
    if (r > 0) v -= degree / r * lower(i + 1);
    out(i) = v;
  }
  return out;
}

Eigen::VectorXd BSplineBasis::evaluate(double x, int order) const {
  if (order > degree_) return Eigen::VectorXd::Zero(size());
  return derivs(x, degree_, order);
}

ConstrainedSpline::ConstrainedSpline(BSplineBasis raw, Eigen::MatrixXd combo)
    : raw_(std::move(raw)), combo_(std::move(combo)) {
  if (combo_.rows() != raw_.size())
    throw std::invalid_argument("ConstrainedSpline: combination matrix has wrong row count");
}

Eigen::VectorXd ConstrainedSpline::evaluate(double x, int order) const {
  return combo_.transpose() * raw_.evaluate(x, order);
}

namespace {

// With clamped cubic knots, B_0'(end) = -B_1'(end), so B_0 + B_1 is the unique
// combination of the two boundary functions with zero slope there.
ConstrainedSpline make_regime_basis() {
  BSplineBasis raw(0.0, 720.0,
                   {1.0 / 3, 2.0 / 3, 1.0, 4.0 / 3, 5.0 / 3, 2, 4, 8, 12, 24, 60, 120, 360});
  const int r = raw.size();  // 17
  Eigen::MatrixXd combo = Eigen::MatrixXd::Zero(r, r - 2);
  combo(0, 0) = combo(1, 0) = 1.0;
  for (int i = 2; i < r - 2; ++i) combo(i, i - 1) = 1.0;
  combo(r - 2, r - 3) = combo(r - 1, r - 3) = 1.0;
  return ConstrainedSpline(std::move(raw), std::move(combo));
}

// Dropping the last three functions zeroes value, slope and curvature at the cutoff.
ConstrainedSpline make_gamma_basis() {
  BSplineBasis raw(0.0, kCoherenceCutoffCpd, {1, 3, 6, 12, 24});
  const int r = raw.size();  // 9
  Eigen::MatrixXd combo = Eigen::MatrixXd::Zero(r, kGammaBasisSize);
  combo(0, 0) = combo(1, 0) = 1.0;
  for (int i = 2; i < r - 3; ++i) combo(i, i - 1) = 1.0;
  return ConstrainedSpline(std::move(raw), std::move(combo));
}

}  // namespace

const ConstrainedSpline& regime_basis() {
  static const ConstrainedSpline b = make_regime_basis();
  return b;
}

const ConstrainedSpline& gamma_basis() {
  static const ConstrainedSpline b = make_gamma_basis();
  return b;
}

}  // namespace evospec
