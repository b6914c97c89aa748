#include "dqd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace dqd {

CornerLabel classify(const DensityState& s, double r_corner) {
  if (!(r_corner > 0.0 && r_corner < 0.5)) {
    throw std::invalid_argument("classify: r_corner must lie in (0, 1/2)");
  }
  const double edge = 1.0 - r_corner;
  if (s.q0 > edge) return CornerLabel::Zero;
  if (s.ql > edge) return CornerLabel::Left;
  if (s.qr > edge) return CornerLabel::Right;
  return CornerLabel::Bulk;
}

std::uint64_t JumpStats::departures(CornerLabel from) const {
  const auto& row = counts[index_of(from)];
  return row[0] + row[1] + row[2];
}

std::array<double, 3> JumpStats::mean_dwell() const {
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = dwell_count[c] ? dwell_total[c] / static_cast<double>(dwell_count[c])
                            : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

JumpStats& JumpStats::operator+=(const JumpStats& o) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) counts[i][j] += o.counts[i][j];
    dwell_total[i] += o.dwell_total[i];
    dwell_count[i] += o.dwell_count[i];
    censored_time[i] += o.censored_time[i];
  }
  t_total += o.t_total;
  return *this;
}

JumpDetector::JumpDetector(double r_corner, bool keep_events, double confirm_ratio)
    : r_(r_corner), keep_events_(keep_events), confirm_depth_(r_corner * confirm_ratio) {
  (void)classify(DensityState{}, r_);  // validates the radius
  if (!(confirm_ratio > 0.0 && confirm_ratio <= 1.0)) {
    throw std::invalid_argument("JumpDetector: confirm_ratio must lie in (0, 1]");
  }
}

namespace {

double population(const DensityState& s, CornerLabel c) {
  switch (c) {
    case CornerLabel::Zero: return s.q0;
    case CornerLabel::Left: return s.ql;
    case CornerLabel::Right: return s.qr;
    default: return 0.0;
  }
}

}  // namespace

void JumpDetector::observe(double t, const DensityState& s) {
  if (!started_) {
    started_ = true;
    t_start_ = t;
  }
  const CornerLabel c = classify(s, r_);
  if (current_ && *current_ == c) {
    candidate_.reset();  // aborted jump
    return;
  }
  if (c != CornerLabel::Bulk && candidate_ != c) {
    candidate_ = c;
    candidate_t_ = t;
  }
  if (candidate_ && population(s, *candidate_) > 1.0 - confirm_depth_) {
    confirm(*candidate_, candidate_t_);
  }
}

void JumpDetector::confirm(CornerLabel c, double t) {
  if (current_) {
    const int from = index_of(*current_);
    ++stats_.counts[from][index_of(c)];
    if (entered_by_event_) {
      // residences opened by the first confirmation have an unknown start
      stats_.dwell_total[from] += t - entered_;
      ++stats_.dwell_count[from];
    } else {
      stats_.censored_time[from] += t - entered_;
    }
    if (keep_events_) events_.push_back({t, *current_, c});
    entered_by_event_ = true;
  }
  current_ = c;
  candidate_.reset();
  entered_ = t;
}

void JumpDetector::finish(double t_end) {
  if (current_) stats_.censored_time[index_of(*current_)] += t_end - entered_;
  stats_.t_total += t_end - (started_ ? t_start_ : t_end);
  started_ = false;
  current_.reset();
  candidate_.reset();
  entered_by_event_ = false;
}

std::vector<JumpEvent> detect_jumps(std::span<const TrajectorySample> samples, double r_corner,
                                    double confirm_ratio) {
  JumpDetector d(r_corner, true, confirm_ratio);
  for (const auto& s : samples) d.observe(s.t, s.state);
  return d.events();
}

FluxEstimate flux_statistical(std::span<const JumpEvent> events, double t_total) {
  std::uint64_t lr = 0, rl = 0;
  for (const auto& e : events) {
    if (e.from == CornerLabel::Left && e.to == CornerLabel::Right) ++lr;
    if (e.from == CornerLabel::Right && e.to == CornerLabel::Left) ++rl;
  }
  return FluxEstimate::from_counts(lr, rl, t_total);
}

namespace {

constexpr double kHalfSqrt3 = 0.86602540378443864676;

}  // namespace

void WindingCounter::observe(const DensityState& s) {
  const double x = s.q0 - 0.5 * (s.ql + s.qr);
  const double y = kHalfSqrt3 * (s.ql - s.qr);
  if (started_) {
    double d = std::atan2(y, x) - std::atan2(y_, x_);
    if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
    if (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
    angle_ += d;

    const bool above_prev = y_ > 0.0;
    const bool above = y > 0.0;
    if (above_prev != above) {
      const double xc = x_ + (x - x_) * (y_ / (y_ - y));
      if (xc < 0.0) {
        if (above_prev) ++pos_;  // L side -> R side: counter-clockwise
        else ++neg_;
      }
    }
  }
  started_ = true;
  x_ = x;
  y_ = y;
}

double WindingCounter::turns() const { return angle_ / (2.0 * std::numbers::pi); }

FluxEstimate flux_winding(std::span<const TrajectorySample> samples, double t_total) {
  WindingCounter w;
  for (const auto& s : samples) w.observe(s.state);
  return w.flux(t_total);
}

std::array<double, 3> dwell_times(std::span<const JumpEvent> events) {
  std::array<double, 3> total{};
  std::array<std::uint64_t, 3> count{};
  for (std::size_t i = 1; i < events.size(); ++i) {
    const CornerLabel c = events[i - 1].to;
    if (events[i].from != c || c == CornerLabel::Bulk) continue;
    total[index_of(c)] += events[i].t - events[i - 1].t;
    ++count[index_of(c)];
  }
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = count[c] ? total[c] / static_cast<double>(count[c])
                      : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

MarkovRates fit_rates(const JumpStats& st) {
  using C = CornerLabel;
  auto time_in = [&](C c) {
    return st.dwell_total[index_of(c)] + st.censored_time[index_of(c)];
  };
  auto est = [&](C from, C to) {
    const double t = time_in(from);
    return t > 0.0 ? static_cast<double>(st.count(from, to)) / t : 0.0;
  };
  return {est(C::Zero, C::Left), est(C::Left, C::Zero), est(C::Zero, C::Right),
          est(C::Right, C::Zero), est(C::Left, C::Right), est(C::Right, C::Left)};
}

SimplexHistogram::SimplexHistogram(int n_bins) : n_(n_bins) {
  if (n_bins < 1) throw std::invalid_argument("SimplexHistogram: n_bins must be >= 1");
  w_.assign(static_cast<std::size_t>(n_) * n_, 0.0);
}

void SimplexHistogram::add(const DensityState& s, double weight) {
  int i = std::clamp(static_cast<int>(std::floor(s.ql * n_)), 0, n_ - 1);
  int j = std::clamp(static_cast<int>(std::floor(s.qr * n_)), 0, n_ - 1);
  while (i + j > n_ - 1) {
    // on the ql + qr = 1 edge; move into the adjacent diagonal cell
    if (i >= j) --i;
    else --j;
  }
  w_[index(i, j)] += weight;
  total_.reset();
}

double SimplexHistogram::weight(int i, int j) const {
  if (i < 0 || j < 0 || i + j > n_ - 1) return 0.0;
  return w_[index(i, j)];
}

double SimplexHistogram::total_weight() const {
  if (!total_) total_ = std::accumulate(w_.begin(), w_.end(), 0.0);
  return *total_;
}

double SimplexHistogram::mass(int i, int j) const {
  const double total = total_weight();
  return total > 0.0 ? weight(i, j) / total : 0.0;
}

DensityState SimplexHistogram::cell_centroid(int i, int j) const {
  const double n = n_;
  double ql, qr;
  if (i + j == n_ - 1) {
    ql = (i + 1.0 / 3.0) / n;
    qr = (j + 1.0 / 3.0) / n;
  } else {
    ql = (i + 0.5) / n;
    qr = (j + 0.5) / n;
  }
  return {1.0 - ql - qr, ql, qr, 0.0};
}

double SimplexHistogram::corner_mass(double r) const {
  const double total = total_weight();
  if (total <= 0.0) return 0.0;
  double in = 0.0;
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; i + j < n_; ++j) {
      const auto c = cell_centroid(i, j);
      if (c.q0 > 1.0 - r || c.ql > 1.0 - r || c.qr > 1.0 - r) in += w_[index(i, j)];
    }
  }
  return in / total;
}

SimplexHistogram& SimplexHistogram::operator+=(const SimplexHistogram& o) {
  if (o.n_ != n_) throw std::invalid_argument("SimplexHistogram: bin count mismatch");
  for (std::size_t k = 0; k < w_.size(); ++k) w_[k] += o.w_[k];
  total_.reset();
  return *this;
}

SimplexHistogram simplex_histogram(std::span<const TrajectorySample> samples, int n_bins) {
  SimplexHistogram h(n_bins);
  if (samples.empty()) return h;
  if (samples.front().t == samples.back().t) {
    for (const auto& s : samples) h.add(s.state, 1.0);
    return h;
  }
  for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
    h.add(samples[k].state, samples[k + 1].t - samples[k].t);
  }
  return h;
}

}  // namespace dqd
