#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace evospec {

using Series = std::vector<double>;
using cplx = std::complex<double>;
using CSeries = std::vector<cplx>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr int kMinutesPerDay = 1440;

/// Input that violates a documented precondition (bad file, bad config, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (non-finite likelihood, solver cap, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cycles per day to radians per minute.
inline double cpd_to_rad(double cpd) { return 2.0 * kPi * cpd / kMinutesPerDay; }
inline double rad_to_cpd(double omega) { return omega * kMinutesPerDay / (2.0 * kPi); }

/// Fourier frequency 2*pi*j/T folded into [0, pi].
inline double folded_frequency(std::size_t j, std::size_t T) {
  const std::size_t jj = std::min(j, T - j);
  return 2.0 * kPi * static_cast<double>(jj) / static_cast<double>(T);
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Iterations are
/// independent; callers own any reduction and do it in index order.
inline void parallel_for(std::size_t n, unsigned workers,
                         const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace evospec
