#pragma once

// Monitored double quantum dot: state parametrisation and the drift and
// diffusion fields of the conditioned (Ito) evolution.
//
// The density matrix is restricted to
//
//        | q0   0      0    |
//   rho = | 0    ql    i k/2 |
//        | 0   -i k/2  qr    |
//
// in the basis {|0>, |L>, |R>}. Only q0, ql, qr and the real coherence k
// evolve; the form is closed under the dynamics.

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dqd {

/// Relative trace tolerance checked after each accepted integration step.
inline constexpr double kTraceTolerance = 1e-9;

/// Largest absolute correction project_valid() accepts before signalling a
/// step-size failure.
inline constexpr double kProjectionTolerance = 1e-3;

struct StateIncrement {
  double dq0 = 0.0;
  double dql = 0.0;
  double dqr = 0.0;
  double dk = 0.0;

  StateIncrement& operator+=(const StateIncrement& o) {
    dq0 += o.dq0;
    dql += o.dql;
    dqr += o.dqr;
    dk += o.dk;
    return *this;
  }
  friend StateIncrement operator+(StateIncrement a, const StateIncrement& b) { return a += b; }
  friend StateIncrement operator-(const StateIncrement& a, const StateIncrement& b) {
    return {a.dq0 - b.dq0, a.dql - b.dql, a.dqr - b.dqr, a.dk - b.dk};
  }
  friend StateIncrement operator*(const StateIncrement& a, double s) {
    return {a.dq0 * s, a.dql * s, a.dqr * s, a.dk * s};
  }
  friend StateIncrement operator*(double s, const StateIncrement& a) { return a * s; }
  friend bool operator==(const StateIncrement&, const StateIncrement&) = default;
};

struct DensityState {
  double q0 = 1.0;
  double ql = 0.0;
  double qr = 0.0;
  double k = 0.0;

  static constexpr DensityState corner_zero() { return {1.0, 0.0, 0.0, 0.0}; }
  static constexpr DensityState corner_left() { return {0.0, 1.0, 0.0, 0.0}; }
  static constexpr DensityState corner_right() { return {0.0, 0.0, 1.0, 0.0}; }

  double trace() const { return q0 + ql + qr; }

  friend DensityState operator+(const DensityState& s, const StateIncrement& d) {
    return {s.q0 + d.dq0, s.ql + d.dql, s.qr + d.dqr, s.k + d.dk};
  }
  friend StateIncrement operator-(const DensityState& a, const DensityState& b) {
    return {a.q0 - b.q0, a.ql - b.ql, a.qr - b.qr, a.k - b.k};
  }
  friend bool operator==(const DensityState&, const DensityState&) = default;
};

bool is_finite(const DensityState& s);

/// Checks trace, box and positivity (k^2 <= 4 ql qr) constraints to `tol`.
bool is_valid(const DensityState& s, double tol = kTraceTolerance);

/// Physical constants of the dot and its two reservoirs. Only the products
/// beta*mu enter, through m_l = exp(beta_mu_l) and m_r = exp(beta_mu_r).
struct ModelParams {
  double a = 0.02;  // left dot -> left reservoir hopping rate
  double b = 0.02;  // right dot -> right reservoir hopping rate
  double beta_mu_l = 0.0;
  double beta_mu_r = 0.0;
  double u = 1.0;  // inter-dot tunnelling amplitude

  double m_l() const { return std::exp(beta_mu_l); }
  double m_r() const { return std::exp(beta_mu_r); }

  /// Throws std::invalid_argument when a <= 0, b <= 0, u < 0 or any field is
  /// non-finite.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Measurement operator O = h_l |L><L| + h_r |R><R| (h_0 = 0).
struct MeasurementConfig {
  double h_l = 0.0;
  double h_r = 0.0;

  /// Symmetric monitoring h_r = -h_l = h.
  static constexpr MeasurementConfig symmetric(double h) { return {-h, h}; }

  /// (h_l - h_r) / 2 in magnitude; equals h under the symmetric convention.
  double h() const { return std::abs(h_l - h_r) / 2.0; }

  /// Coherence decay rate ((h_l - h_r)^2 + a + b) / 4.
  double nu(const ModelParams& p) const {
    const double dh = h_l - h_r;
    return (dh * dh + p.a + p.b) / 4.0;
  }

  /// Largest squared relative noise rate of a small population next to a
  /// corner: 4 max(h_l^2, h_r^2, (h_l - h_r)^2). Near a corner the diffusion
  /// is multiplicative with at most this rate, so sigma^2 dt measures how
  /// coarse a step is there.
  double corner_noise_rate() const {
    const double dh = h_l - h_r;
    return 4.0 * std::max({h_l * h_l, h_r * h_r, dh * dh});
  }

  friend bool operator==(const MeasurementConfig&, const MeasurementConfig&) = default;
};

/// Deterministic (dt) coefficients. Throws std::domain_error on non-finite
/// state components.
StateIncrement drift(const DensityState& s, const ModelParams& p, const MeasurementConfig& m);

/// Stochastic (dW) coefficients. Throws std::domain_error on non-finite input.
StateIncrement diffusion(const DensityState& s, const MeasurementConfig& m);

struct DriftComponents {
  StateIncrement tunnel;
  StateIncrement bath;
  StateIncrement measure;
};

/// Splits drift() into its Hamiltonian, reservoir and measurement parts. The
/// k-decay -2 nu_h k is divided as -(a+b)/2 k (bath) and -(h_l-h_r)^2/2 k
/// (measurement).
DriftComponents drift_components(const DensityState& s, const ModelParams& p,
                                 const MeasurementConfig& m);

/// Drift of the record: dX = 2 tr(O rho) dt + dW.
inline double record_drift(const DensityState& s, const MeasurementConfig& m) {
  return 2.0 * (m.h_l * s.ql + m.h_r * s.qr);
}

/// tr(J rho) for the flux operator J = i u (|R><L| - |L><R|).
inline double quantum_flux(const DensityState& s, const ModelParams& p) { return p.u * s.k; }

class ProjectionError : public std::runtime_error {
 public:
  ProjectionError(const std::string& what, double correction)
      : std::runtime_error(what), correction_(correction) {}
  double correction() const { return correction_; }

 private:
  double correction_;
};

struct Projection {
  DensityState state;
  double correction = 0.0;  // max absolute change over the four coordinates
};

/// Clamps to the physical region without throwing. Identity on valid states.
Projection project(const DensityState& s, double trace_tol = kTraceTolerance);

/// project() that throws ProjectionError when the correction exceeds
/// `projection_tol`.
DensityState project_valid(const DensityState& s, double trace_tol = kTraceTolerance,
                           double projection_tol = kProjectionTolerance);

namespace detail {

// Unchecked field evaluations for the integrator inner loop.
inline StateIncrement drift_field(const DensityState& s, const ModelParams& p, double m_l,
                                  double m_r, double nu) {
  const double a = p.a, b = p.b, u = p.u;
  return {
      a * s.ql + b * s.qr - (a * m_l + b * m_r) * s.q0,
      -u * s.k + a * m_l * s.q0 - a * s.ql,
      u * s.k - b * s.qr + b * m_r * s.q0,
      2.0 * (-nu * s.k + u * (s.ql - s.qr)),
  };
}

inline StateIncrement diffusion_field(const DensityState& s, const MeasurementConfig& m) {
  const double hl = m.h_l, hr = m.h_r;
  return {
      -2.0 * (hl * s.ql + hr * s.qr) * s.q0,
      2.0 * (hl * (1.0 - s.ql) - hr * s.qr) * s.ql,
      2.0 * (hr * (1.0 - s.qr) - hl * s.ql) * s.qr,
      (hl * (1.0 - 2.0 * s.ql) + hr * (1.0 - 2.0 * s.qr)) * s.k,
  };
}

}  // namespace detail

}  // namespace dqd
