#pragma once

// Shared helpers for the unit tests: random parameter generators and a few
// statistics.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "dqd/model.hpp"

namespace dqd::test {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline ModelParams random_params(Rng& rng) {
  ModelParams p;
  p.a = uniform(rng, 0.005, 0.5);
  p.b = uniform(rng, 0.005, 0.5);
  p.beta_mu_l = uniform(rng, -3.0, 3.0);
  p.beta_mu_r = uniform(rng, -3.0, 3.0);
  p.u = uniform(rng, 0.1, 2.0);
  return p;
}

inline MeasurementConfig random_measurement(Rng& rng) {
  return {uniform(rng, -20.0, 20.0), uniform(rng, -20.0, 20.0)};
}

/// Uniform point of the physical region: populations on the simplex, k inside
/// the positivity bound.
inline DensityState random_state(Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  const double x = e(rng), y = e(rng), z = e(rng);
  const double sum = x + y + z;
  DensityState s{x / sum, y / sum, z / sum, 0.0};
  s.k = uniform(rng, -1.0, 1.0) * 2.0 * std::sqrt(s.ql * s.qr);
  return s;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Kolmogorov-Smirnov statistic of `xs` against the standard normal.
inline double ks_statistic(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace dqd::test
