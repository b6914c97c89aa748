#pragma once

// Bang-bang measurement-strength feedback driven by an exponentially filtered
// slope of the measurement record.

#include <span>

#include "dqd/analysis.hpp"
#include "dqd/model.hpp"
#include "dqd/sde.hpp"

namespace dqd {

struct FeedbackConfig {
  double h_min = 5.0;
  double h_max = 15.0;
  double delta = 2.0;    // slope threshold, same units as record_drift()
  double tau_int = 1.0;  // filter window

  void validate() const;

  friend bool operator==(const FeedbackConfig&, const FeedbackConfig&) = default;
};

struct SlopeFilterState {
  double s = 0.0;
};

/// s' = s exp(-dt/tau_int) + dx / tau_int. For dx = c dt the fixed point is
/// c (dt/tau_int) / (1 - exp(-dt/tau_int)), i.e. c up to O(dt/tau_int).
inline SlopeFilterState slope_update(SlopeFilterState st, double dx, double dt, double tau_int) {
  return {st.s * std::exp(-dt / tau_int) + dx / tau_int};
}

/// h_r = -h_l = h_min when s <= delta, h_max otherwise.
inline MeasurementConfig control(SlopeFilterState st, const FeedbackConfig& cfg) {
  return MeasurementConfig::symmetric(st.s <= cfg.delta ? cfg.h_min : cfg.h_max);
}

/// Closes the loop inside integrate(): after each coarse step the filter
/// consumes dX and the next step runs with control(s).
class FeedbackController final : public MeasurementController {
 public:
  explicit FeedbackController(FeedbackConfig cfg, SlopeFilterState initial = {});

  MeasurementConfig current() const override { return control(filter_, cfg_); }
  void observe(double dx, double dt) override {
    filter_ = slope_update(filter_, dx, dt, cfg_.tau_int);
  }
  SlopeFilterState filter() const { return filter_; }

 private:
  FeedbackConfig cfg_;
  SlopeFilterState filter_;
};

/// Coarse-grid time during which the active strength is at least `h_high`.
class StrongFieldTimer final : public TrajectoryObserver {
 public:
  explicit StrongFieldTimer(double h_high) : h_high_(h_high) {}
  void on_sample(const TrajectorySample& s) override;
  double time() const { return time_; }

 private:
  double h_high_;
  double time_ = 0.0;
  bool started_ = false;
  bool last_high_ = false;
  double last_t_ = 0.0;
};

struct ClosedLoopResult {
  IntegrationStats integration;
  JumpStats jumps;
  FluxEstimate flux;
  double time_at_h_max = 0.0;  // coarse-grid time spent with h = h_max
};

/// Runs the feedback loop over [0, T] and reads the statistical flux off the
/// trajectory with a corner radius `r_corner`. Extra observers see the same
/// stream.
ClosedLoopResult closed_loop_integrate(const DensityState& initial, const ModelParams& p,
                                       const FeedbackConfig& fb, double T,
                                       const IntegratorConfig& cfg,
                                       std::span<TrajectoryObserver* const> observers = {},
                                       double r_corner = kDefaultCornerRadius);

}  // namespace dqd
