#pragma once

// Reading the effective jump process off a simulated trajectory: corner
// classification, jump events, statistical and winding fluxes, dwell times,
// rate estimates and the time-weighted occupation histogram of the simplex.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dqd/events.hpp"
#include "dqd/markov.hpp"
#include "dqd/model.hpp"
#include "dqd/sde.hpp"

namespace dqd {

inline constexpr double kDefaultCornerRadius = 0.1;

/// A candidate corner is confirmed once its population exceeds
/// 1 - r_corner * kDefaultConfirmRatio. Under the measurement back-action a
/// population that has just crossed 1 - r still falls back with probability
/// about r / (1 - r); requiring the deeper level removes those aborted jumps.
inline constexpr double kDefaultConfirmRatio = 0.1;

/// Throws std::invalid_argument unless r_corner is in (0, 1/2).
CornerLabel classify(const DensityState& s, double r_corner = kDefaultCornerRadius);

/// Transition counts and corner residence times; merges by addition.
struct JumpStats {
  std::array<std::array<std::uint64_t, 3>, 3> counts{};  // [from][to]
  std::array<double, 3> dwell_total{};     // completed residences
  std::array<std::uint64_t, 3> dwell_count{};
  std::array<double, 3> censored_time{};   // open residence at the end of a run
  double t_total = 0.0;

  std::uint64_t count(CornerLabel from, CornerLabel to) const {
    return counts[index_of(from)][index_of(to)];
  }
  std::uint64_t departures(CornerLabel from) const;
  /// Mean completed residence per corner (NaN when none completed).
  std::array<double, 3> mean_dwell() const;

  JumpStats& operator+=(const JumpStats& o);
};

/// Streaming corner tracker. Entering the ball of a different corner makes
/// it a candidate; the candidate is confirmed when it reaches the depth
/// r_corner * confirm_ratio and dropped if the state returns to the ball of
/// the current corner first. A confirmation emits an event stamped with the
/// candidate's entry time. confirm_ratio = 1 confirms on entry.
class JumpDetector final : public TrajectoryObserver {
 public:
  explicit JumpDetector(double r_corner = kDefaultCornerRadius, bool keep_events = true,
                        double confirm_ratio = kDefaultConfirmRatio);

  void observe(double t, const DensityState& s);
  /// Closes the observation window at `t_end` (adds the censored residence).
  void finish(double t_end);

  void on_substep(double t, const DensityState& s, double, double, int) override { observe(t, s); }

  const std::vector<JumpEvent>& events() const { return events_; }
  const JumpStats& stats() const { return stats_; }
  std::optional<CornerLabel> current() const { return current_; }
  double radius() const { return r_; }

 private:
  void confirm(CornerLabel c, double t);

  double r_;
  bool keep_events_;
  double confirm_depth_;
  std::optional<CornerLabel> current_;
  std::optional<CornerLabel> candidate_;
  double candidate_t_ = 0.0;
  double entered_ = 0.0;
  bool entered_by_event_ = false;
  double t_start_ = 0.0;
  bool started_ = false;
  std::vector<JumpEvent> events_;
  JumpStats stats_;
};

std::vector<JumpEvent> detect_jumps(std::span<const TrajectorySample> samples,
                                    double r_corner = kDefaultCornerRadius,
                                    double confirm_ratio = kDefaultConfirmRatio);

/// Direct L->R minus R->L events per unit time; chains through 0 do not count.
FluxEstimate flux_statistical(std::span<const JumpEvent> events, double t_total);

/// Winding of the trajectory around the simplex barycentre. The simplex is
/// embedded with 0 at angle 0, L at 120 and R at 240 degrees, so the cycle
/// 0 -> L -> R -> 0 is one positive turn. Net turns are counted as signed
/// crossings of the ray from the barycentre through the L-R edge midpoint.
class WindingCounter final : public TrajectoryObserver {
 public:
  void observe(const DensityState& s);
  void on_substep(double, const DensityState& s, double, double, int) override { observe(s); }

  std::uint64_t positive() const { return pos_; }
  std::uint64_t negative() const { return neg_; }
  /// Continuous accumulated angle / 2 pi.
  double turns() const;
  FluxEstimate flux(double t_total) const {
    return FluxEstimate::from_counts(pos_, neg_, t_total);
  }

 private:
  bool started_ = false;
  double x_ = 0.0, y_ = 0.0;
  double angle_ = 0.0;
  std::uint64_t pos_ = 0, neg_ = 0;
};

FluxEstimate flux_winding(std::span<const TrajectorySample> samples, double t_total);

/// Mean completed residence time per corner (0, L, R); NaN when none.
std::array<double, 3> dwell_times(std::span<const JumpEvent> events);

/// Maximum-likelihood rates: transitions out of a corner divided by the total
/// time confirmed in it.
MarkovRates fit_rates(const JumpStats& stats);

/// Time-weighted occupation of a triangular grid over (ql, qr). Cell (i, j)
/// covers ql in [i/n, (i+1)/n), qr in [j/n, (j+1)/n) with i + j <= n - 1.
class SimplexHistogram final : public TrajectoryObserver {
 public:
  explicit SimplexHistogram(int n_bins = 100);

  void add(const DensityState& s, double weight);
  void on_substep(double, const DensityState& s, double dt, double, int) override { add(s, dt); }

  int bins() const { return n_; }
  /// Sum of the cell weights, so that the masses add up to 1 up to the
  /// rounding of the final division.
  double total_weight() const;
  double weight(int i, int j) const;
  /// weight(i, j) / total_weight().
  double mass(int i, int j) const;
  /// Centroid (q0, ql, qr) of the part of the simplex inside cell (i, j).
  DensityState cell_centroid(int i, int j) const;
  /// Mass of cells whose centroid lies within `r` of one of the corners.
  double corner_mass(double r) const;

  SimplexHistogram& operator+=(const SimplexHistogram& o);

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }
  int n_;
  std::vector<double> w_;
  mutable std::optional<double> total_;  // cached; reset by add() and +=
};

/// Histogram of a sample stream, each sample weighted by the time to the
/// next one (unit weights when all samples share one time).
SimplexHistogram simplex_histogram(std::span<const TrajectorySample> samples, int n_bins);

}  // namespace dqd
