#pragma once

#include <cstdint>
#include <string_view>

namespace dqd {

/// Corner of the probability simplex, i.e. a state of the effective chain.
enum class CornerLabel : std::uint8_t { Zero = 0, Left = 1, Right = 2, Bulk = 3 };

inline constexpr std::string_view to_string(CornerLabel c) {
  switch (c) {
    case CornerLabel::Zero: return "0";
    case CornerLabel::Left: return "L";
    case CornerLabel::Right: return "R";
    case CornerLabel::Bulk: return "bulk";
  }
  return "?";
}

inline constexpr int index_of(CornerLabel c) { return static_cast<int>(c); }

struct JumpEvent {
  double t = 0.0;
  CornerLabel from = CornerLabel::Zero;
  CornerLabel to = CornerLabel::Zero;

  friend bool operator==(const JumpEvent&, const JumpEvent&) = default;
};

/// Net left-to-right transfer per unit time with a Poisson error estimate.
struct FluxEstimate {
  std::uint64_t n_lr = 0;
  std::uint64_t n_rl = 0;
  double t_total = 0.0;
  double flux = 0.0;
  double mc_error = 0.0;

  static FluxEstimate from_counts(std::uint64_t n_lr, std::uint64_t n_rl, double t_total);
};

}  // namespace dqd
