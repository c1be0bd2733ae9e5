#pragma once

#include <cstddef>

#include "evospec/common.hpp"

namespace evospec {

/// Centered Daniell smoother: uniform average over [t-w, t+w], renormalized
/// over the available points near the ends, composed `passes` times.
inline Series daniell_smooth(Series x, int half_width, int passes = 3) {
  const std::size_t n = x.size();
  for (int p = 0; p < passes; ++p) {
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + x[t];
    Series y(n);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t lo = t >= static_cast<std::size_t>(half_width) ? t - half_width : 0;
      const std::size_t hi = std::min(n - 1, t + static_cast<std::size_t>(half_width));
      y[t] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    }
    x = std::move(y);
  }
  return x;
}

/// Left-sided Daniell smoother: average over [t-w, t] (renormalized at the
/// start), composed `passes` times. Never looks at future values.
inline Series causal_daniell_smooth(Series x, int width, int passes = 3) {
  const std::size_t n = x.size();
  for (int p = 0; p < passes; ++p) {
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + x[t];
    Series y(n);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t lo = t >= static_cast<std::size_t>(width) ? t - width : 0;
      y[t] = (prefix[t + 1] - prefix[lo]) / static_cast<double>(t - lo + 1);
    }
    x = std::move(y);
  }
  return x;
}

/// Linear interpolation of a series at a fractional index, clamped to the ends.
inline double interpolate_at(const Series& x, double t) {
  if (x.empty()) return 0.0;
  if (t <= 0) return x.front();
  const double last = static_cast<double>(x.size() - 1);
  if (t >= last) return x.back();
  const auto i = static_cast<std::size_t>(t);
  const double f = t - static_cast<double>(i);
  return x[i] + f * (x[i + 1] - x[i]);
}

}  // namespace evospec
