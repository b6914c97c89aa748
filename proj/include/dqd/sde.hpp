#pragma once

// Stochastic integration of the monitored-dot SDE: a derivative-free
// second-order Runge-Kutta step, driven by a Brownian path that is refined by
// Levy dichotomy wherever the step-doubling error is too large.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "dqd/model.hpp"
#include "dqd/noise.hpp"

namespace dqd {

struct IntegratorConfig {
  double dt_coarse = 1e-2;
  double err_tol = 1e-6;  // threshold on error_cost(), a squared distance
  int max_depth = 20;
  std::uint64_t seed = 0;
  // Upper bound on corner_noise_rate() * dt for every accepted sub-step.
  // Near the corners the populations are tiny, so error_cost never asks for
  // refinement there, yet the escape statistics depend on resolving their
  // multiplicative noise. Intervals longer than this are split before the
  // error test. Infinity disables the guard.
  double noise_step_cap = 0.05;

  void validate() const;

  friend bool operator==(const IntegratorConfig&, const IntegratorConfig&) = default;
};

struct TrajectorySample {
  double t = 0.0;
  DensityState state;
  double x = 0.0;  // accumulated measurement record X_t
  MeasurementConfig h_active;
};

/// Generic form of the stochastic RK2 update:
///
///   x~ = x + L(x) dt + D(x) sqrt(dt)
///   x' = x + L(x) dt + D(x) eps + 1/2 (D(x~) - D(x)) (eps^2 - dt) / sqrt(dt)
///
/// `State` needs `State + Inc`, and `Inc` needs +, - and scalar *. Works for
/// plain doubles, which is how the strong-order tests drive it.
template <class State, class Drift, class Diffusion>
State rk2_update(const State& x, Drift&& drift_fn, Diffusion&& diffusion_fn, double dt,
                 double eps) {
  const double sdt = std::sqrt(dt);
  const auto l = drift_fn(x);
  const auto d = diffusion_fn(x);
  const State support = x + (l * dt + d * sdt);
  const auto d_support = diffusion_fn(support);
  return x + (l * dt + d * eps + (d_support - d) * (0.5 * (eps * eps - dt) / sdt));
}

/// One RK2 step of the dot SDE followed by project_valid(). Throws
/// std::domain_error on a non-finite result and ProjectionError when the
/// step leaves the physical region by more than kProjectionTolerance.
DensityState rk2_step(const DensityState& s, const ModelParams& p, const MeasurementConfig& m,
                      double dt, double eps);

/// tr[(rho1 - rho2)^2] for the restricted density-matrix form; the two
/// coherence entries +-ik/2 contribute dk^2 / 2.
inline double error_cost(const DensityState& s1, const DensityState& s2) {
  const auto d = s1 - s2;
  return d.dq0 * d.dq0 + d.dql * d.dql + d.dqr * d.dqr + 0.5 * d.dk * d.dk;
}

/// Receives every accepted sub-step (`on_substep`) and every coarse-grid
/// sample (`on_sample`).
class TrajectoryObserver {
 public:
  virtual ~TrajectoryObserver() = default;
  /// State at time `t` after a sub-step of length `dt` driven by `eps`;
  /// `level` is the dyadic level of the sub-step (coarse step = 0).
  virtual void on_substep(double /*t*/, const DensityState& /*s*/, double /*dt*/,
                          double /*eps*/, int /*level*/) {}
  virtual void on_sample(const TrajectorySample& /*sample*/) {}
};

struct StepResult {
  DensityState state;
  int depth_used = 0;    // deepest recursion level reached
  bool capped = false;   // max_depth reached with the cost still above tolerance
  double max_cost = 0.0; // largest error cost among accepted leaves
  int leaves = 0;
};

/// Adaptive step over one coarse interval of length `dt` with increment
/// `eps`. Nodes whose half-length exceeds the noise-step guard are split
/// unconditionally (up to max_depth). Each remaining node compares the single RK2 step with the two half steps
/// driven by the bridge-refined half increments; the half-step result is
/// accepted when error_cost <= err_tol, otherwise both halves are refined
/// recursively. Half increments come from `tree` at (coarse_index, node), so
/// every drawn Gaussian drives exactly one accepted sub-step.
StepResult adaptive_step(const DensityState& s, const ModelParams& p, const MeasurementConfig& m,
                         double t, double dt, double eps, const IntegratorConfig& cfg,
                         const BrownianTree& tree, std::uint64_t coarse_index,
                         std::span<TrajectoryObserver* const> observers = {});

/// Supplies the measurement configuration for each coarse step.
class MeasurementController {
 public:
  virtual ~MeasurementController() = default;
  virtual MeasurementConfig current() const = 0;
  /// Called after every coarse step with the record increment dX over `dt`.
  virtual void observe(double dx, double dt) = 0;
};

class FixedMeasurement final : public MeasurementController {
 public:
  explicit FixedMeasurement(MeasurementConfig m) : m_(m) {}
  MeasurementConfig current() const override { return m_; }
  void observe(double, double) override {}

 private:
  MeasurementConfig m_;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double t) : std::runtime_error(what), t_(t) {}
  double time() const { return t_; }

 private:
  double t_;
};

struct IntegrationStats {
  std::uint64_t coarse_steps = 0;
  std::uint64_t substeps = 0;
  std::uint64_t capped_steps = 0;  // steps that hit max_depth
  int max_depth_used = 0;
};

/// Integrates from `initial` over [0, T] on a uniform coarse grid
/// (dt = T / ceil(T / dt_coarse)). The record X accumulates
/// record_drift * dt + eps on the coarse grid with the same increments that
/// drive the state. Output is fully determined by (cfg.seed, cfg, params,
/// controller). Failures are rethrown as IntegrationError carrying the time.
IntegrationStats integrate(const DensityState& initial, const ModelParams& p,
                           MeasurementController& controller, double T,
                           const IntegratorConfig& cfg,
                           std::span<TrajectoryObserver* const> observers);

}  // namespace dqd
