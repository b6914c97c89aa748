#pragma once

// Effective three-state jump process 0 <-> L <-> R <-> 0 approximating the
// monitored dot at strong measurement, and the analytic quantities derived
// from it: stationary law, mean flux, mean steady density matrix and the
// perfect-feedback flux.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "dqd/events.hpp"
#include "dqd/model.hpp"

namespace dqd {

struct MarkovRates {
  double l_0L = 0.0;
  double l_L0 = 0.0;
  double l_0R = 0.0;
  double l_R0 = 0.0;
  double l_LR = 0.0;
  double l_RL = 0.0;

  /// Rate of the transition from -> to (zero on the diagonal).
  double rate(CornerLabel from, CornerLabel to) const;
  double exit_rate(CornerLabel from) const;

  /// Generator G with dPi/dt = G Pi; index order (0, L, R).
  Eigen::Matrix3d generator() const;
};

struct OccupationVector {
  double pi_0 = 1.0;
  double pi_l = 0.0;
  double pi_r = 0.0;

  double operator[](CornerLabel c) const;
  double sum() const { return pi_0 + pi_l + pi_r; }
};

class NonErgodicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// lambda_0L = a m_l, lambda_L0 = a, lambda_0R = b m_r, lambda_R0 = b and
/// lambda_LR = lambda_RL = u^2 / nu_h.
MarkovRates rates(const ModelParams& p, const MeasurementConfig& m);

/// Explicit Euler step of the master equation. Total probability is kept
/// exactly by assigning pi_0 the complement. Throws std::invalid_argument when
/// dt would produce a negative probability (dt * exit rate > 1).
OccupationVector master_step(const OccupationVector& pi, const MarkovRates& r, double dt);

/// Stationary law from the generator by partial-pivoting LU with the
/// normalisation row. Throws NonErgodicError when the law is not unique.
OccupationVector stationary(const MarkovRates& r);

/// Closed-form stationary law of the rate structure produced by rates().
OccupationVector stationary_closed_form(const ModelParams& p, const MeasurementConfig& m);

/// lambda_LR Pi_l - lambda_RL Pi_r.
inline double stationary_flux(const MarkovRates& r, const OccupationVector& pi) {
  return r.l_LR * pi.pi_l - r.l_RL * pi.pi_r;
}

/// Closed-form mean flux of the chain,
///   (m_l - m_r) u^2 / (nu_h (m_l + m_r + 1) + u^2 ((1 + 2 m_l)/b + (1 + 2 m_r)/a)).
double analytic_flux(const ModelParams& p, const MeasurementConfig& m);

/// Large-h limit (m_l - m_r) u^2 / (h^2 (m_l + m_r + 1)).
double analytic_flux_strong_limit(const ModelParams& p, double h);

/// Null vector (with unit trace) of the linear mean-state drift.
/// Throws SingularSystemError for degenerate parameters such as a = b = u = 0.
DensityState mean_steady_state(const ModelParams& p, const MeasurementConfig& m);

/// Perfect-feedback flux in the strong-measurement limit,
///   u^2 / (1 + m_l + m_r) (m_l / h_min^2 - m_r / h_max^2).
double feedback_flux_bound(const ModelParams& p, double h_min, double h_max);

/// Same bound evaluated on the chain with lambda_LR taken at h_min and
/// lambda_RL at h_max (finite nu_h, exact stationary law).
double feedback_flux_bound_exact(const ModelParams& p, double h_min, double h_max);

struct ChainPath {
  std::vector<JumpEvent> events;
  double occupation[3] = {0.0, 0.0, 0.0};  // time spent in 0, L, R
  double t_end = 0.0;
};

/// Event-driven exact sampler of the jump process on [0, T].
ChainPath sample_chain(const MarkovRates& r, double T, std::uint64_t seed,
                       CornerLabel start = CornerLabel::Zero);

}  // namespace dqd
