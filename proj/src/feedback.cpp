#include "dqd/feedback.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dqd {

void FeedbackConfig::validate() const {
  std::ostringstream os;
  if (!(std::isfinite(h_min) && h_min > 0.0)) os << "h_min must be > 0; ";
  if (!(std::isfinite(h_max) && h_max >= h_min)) os << "h_max must be >= h_min; ";
  if (!std::isfinite(delta)) os << "delta must be finite; ";
  if (!(std::isfinite(tau_int) && tau_int > 0.0)) os << "tau_int must be > 0; ";
  const auto msg = os.str();
  if (!msg.empty()) throw std::invalid_argument("FeedbackConfig: " + msg);
}

FeedbackController::FeedbackController(FeedbackConfig cfg, SlopeFilterState initial)
    : cfg_(cfg), filter_(initial) {
  cfg_.validate();
}

void StrongFieldTimer::on_sample(const TrajectorySample& s) {
  if (started_ && last_high_) time_ += s.t - last_t_;
  started_ = true;
  last_t_ = s.t;
  last_high_ = s.h_active.h() >= h_high_;
}

ClosedLoopResult closed_loop_integrate(const DensityState& initial, const ModelParams& p,
                                       const FeedbackConfig& fb, double T,
                                       const IntegratorConfig& cfg,
                                       std::span<TrajectoryObserver* const> observers,
                                       double r_corner) {
  FeedbackController controller(fb);
  JumpDetector detector(r_corner, /*keep_events=*/false);
  StrongFieldTimer high(fb.h_max);

  std::vector<TrajectoryObserver*> all{&detector, &high};
  all.insert(all.end(), observers.begin(), observers.end());

  ClosedLoopResult out;
  out.integration = integrate(initial, p, controller, T, cfg, all);
  detector.finish(T);
  out.jumps = detector.stats();
  out.flux = FluxEstimate::from_counts(out.jumps.count(CornerLabel::Left, CornerLabel::Right),
                                       out.jumps.count(CornerLabel::Right, CornerLabel::Left), T);
  out.time_at_h_max = fb.h_min < fb.h_max ? high.time() : 0.0;
  return out;
}

}  // namespace dqd
