#include "dqd/noise.hpp"

namespace dqd {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  SplitMix64 g(a);
  std::uint64_t h = g();
  g = SplitMix64(h ^ b);
  h = g();
  g = SplitMix64(h ^ c);
  return g();
}

double snap_to_lattice(double x) {
  if (!(std::abs(x) < kLatticeBound)) return x;
  return std::nearbyint(x / kIncrementQuantum) * kIncrementQuantum;
}

std::pair<double, double> split_exact(double eps, double e1_proposal) {
  const bool on_lattice = std::abs(eps) < kLatticeBound && snap_to_lattice(eps) == eps;
  if (on_lattice && std::abs(e1_proposal) < kLatticeBound) {
    // both operands are multiples of the quantum and |eps - e1| < 2^53 quantum
    const double e1 = snap_to_lattice(e1_proposal);
    return {e1, eps - e1};
  }
  return {e1_proposal, eps - e1_proposal};
}

double BrownianTree::coarse(std::uint64_t n, double dt) const {
  SplitMix64 g(mix_seed(seed_, n, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  return snap_to_lattice(std::sqrt(dt) * normal(g));
}

std::pair<double, double> BrownianTree::split(std::uint64_t n, std::uint64_t node, double eps,
                                              double dt) const {
  SplitMix64 g(mix_seed(seed_, n, node));
  return refine_increment(eps, dt, g);
}

}  // namespace dqd
