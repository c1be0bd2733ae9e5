#pragma once

// Dense reference computations shared by the unit and acceptance tests.

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "evospec/spatial_field.hpp"
#include "evospec/spectral_likelihood.hpp"
#include "evospec/trend_jump.hpp"

namespace evospec::testing {

/// Random positive model with K regimes and B blocks spread evenly over [0, T).
struct RandomSite {
  EvoSpectrumModel model;
  SiteSchedule schedule;
};

inline RandomSite random_site(std::mt19937_64& rng, std::size_t T, int K, int B, bool radiation = true) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.3, 2.0);
  RandomSite rs;
  for (int k = 0; k < K; ++k) {
    Regime r;
    for (int i = 0; i < kRegimeBasisSize; ++i) r.coeffs(i) = 0.5 * nd(rng);
    rs.model.regimes.push_back(r);
  }
  rs.model.weights.resize(K, B);
  for (int k = 0; k < K; ++k)
    for (int b = 0; b < B; ++b) rs.model.weights(k, b) = ud(rng);
  rs.model.a0 = ud(rng);
  rs.model.a1 = radiation ? ud(rng) : 0.0;
  rs.schedule.block.resize(T);
  rs.schedule.radiation.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    rs.schedule.block[t] = static_cast<int>(t * B / T);
    rs.schedule.radiation[t] = radiation ? std::max(0.0, std::sin(2 * kPi * t / T)) : 0.0;
  }
  for (int b = 1; b < B; ++b) rs.schedule.partition.changepoints.push_back(static_cast<double>(b) * T / B);
  return rs;
}

/// Column j of C is A(t, omega_j) exp(i omega_j t).
inline Eigen::MatrixXcd dense_ct(const SiteOperator& op) {
  const auto T = static_cast<Eigen::Index>(op.T());
  Eigen::MatrixXcd C(T, T);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index j = 0; j < T; ++j)
      C(t, j) = op.amplitude(t, j) * std::polar(1.0, 2 * kPi * double(j) * double(t) / double(T));
  return C;
}

/// Exact Gaussian negative log likelihood of x with covariance S.
inline double dense_gaussian_nll(const Eigen::MatrixXd& S, const Eigen::VectorXd& x) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  double logdet = 0;
  for (Eigen::Index i = 0; i < S.rows(); ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
  return 0.5 * double(x.size()) * std::log(2 * kPi) + 0.5 * logdet + 0.5 * x.dot(llt.solve(x));
}

/// Noiseless cold-front profile on day 1 of a two-day record.
struct JumpCase {
  JumpModel shared;
  Series m_hat;
  Series temps;
  double tau = 0, D = 0, lambda = 0;
};

inline JumpCase jump_case(double tau, double D, double lambda) {
  JumpCase c;
  const std::size_t T = 2 * kMinutesPerDay;
  c.m_hat.resize(T);
  for (std::size_t t = 0; t < T; ++t) c.m_hat[t] = 14.0 + 4.0 * std::sin(2 * kPi * (double(t) - 480.0) / 1440.0);
  c.shared.window.jump_day = 1;
  c.shared.b1.resize(kMinutesPerDay);
  for (std::size_t t = 0; t < kMinutesPerDay; ++t) c.shared.b1[t] = c.m_hat[t] + 1.5;
  c.shared.b2_anchor_value = c.m_hat[kMinutesPerDay] - 2.0;
  c.shared.b2_slope = 0.002;
  c.tau = tau;
  c.D = D;
  c.lambda = lambda;
  const Series J = jump_series(c.shared, tau, D, lambda, c.m_hat);
  c.temps.resize(T);
  for (std::size_t t = 0; t < T; ++t) c.temps[t] = c.m_hat[t] + J[t];
  return c;
}

/// First minute of the window whose first difference falls below the threshold.
inline std::size_t first_drop(const Series& x, const JumpWindow& w) {
  for (std::size_t t = std::max<std::size_t>(w.begin(), 1); t < w.end(); ++t)
    if (x[t] - x[t - 1] < kJumpThreshold) return t;
  return w.begin();
}

/// Random planar field instance: n sites in a 100 km square.
struct FieldCase {
  std::vector<FieldSite> sites, targets;
  Eigen::VectorXd values;
};

inline FieldCase field_case(std::mt19937_64& rng, int n, int m) {
  std::uniform_real_distribution<double> u(-50, 50);
  std::normal_distribution<double> nd;
  FieldCase c;
  for (int i = 0; i < n; ++i) c.sites.push_back({u(rng), u(rng), 37 + u(rng) / 100, 200 + 4 * u(rng)});
  for (int i = 0; i < m; ++i) c.targets.push_back({u(rng), u(rng), 37 + u(rng) / 100, 200 + 4 * u(rng)});
  c.values.resize(n);
  for (int i = 0; i < n; ++i) c.values(i) = 2 + 0.03 * c.sites[i].x_km - 0.01 * c.sites[i].y_km + nd(rng);
  return c;
}

/// Restricted log likelihood from contrasts spanning the left null space of F
/// (taken from a full SVD), with explicit inverse and determinant.
inline double brute_reml(const Eigen::VectorXd& y, const Eigen::MatrixXd& F, const Eigen::MatrixXd& D, double eta) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(F, Eigen::ComputeFullU);
  const auto n = F.rows(), p = F.cols();
  const Eigen::MatrixXd Q = svd.matrixU().rightCols(n - p);
  const Eigen::MatrixXd M = eta * Q.transpose() * (-D) * Q;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  const Eigen::VectorXd w = Q.transpose() * y;
  return -0.5 * (double(n - p) * std::log(2 * kPi) + std::log(lu.determinant()) + w.dot(lu.inverse() * w));
}

/// Textbook universal kriging with the generalized covariance K = -eta D.
struct BruteKriging {
  Eigen::VectorXd beta, mean;
  Eigen::MatrixXd cov;
};

inline BruteKriging brute_krige(const Eigen::VectorXd& y, const Eigen::MatrixXd& F, const Eigen::MatrixXd& F0,
                                const Eigen::MatrixXd& D, const Eigen::MatrixXd& D0, const Eigen::MatrixXd& D00,
                                double eta) {
  const Eigen::MatrixXd Ki = (-eta * D).inverse();
  const Eigen::MatrixXd k0 = -eta * D0, G00 = -eta * D00;
  const Eigen::MatrixXd A = (F.transpose() * Ki * F).inverse();
  BruteKriging b;
  b.beta = A * F.transpose() * Ki * y;
  b.mean = F0 * b.beta + k0.transpose() * Ki * (y - F * b.beta);
  const Eigen::MatrixXd R = F0.transpose() - F.transpose() * Ki * k0;
  b.cov = G00 - k0.transpose() * Ki * k0 + R.transpose() * A * R;
  return b;
}

}  // namespace evospec::testing
