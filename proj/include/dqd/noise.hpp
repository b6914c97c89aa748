#pragma once

// Gaussian increments for the integrator and their Levy (Brownian bridge)
// refinement.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

namespace dqd {

/// SplitMix64 (Steele, Lea & Flood 2014). Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Stateless 64-bit mix of several words; used to address noise by position.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

/// Increments are kept on the lattice kIncrementQuantum * Z. For lattice
/// points below kLatticeBound in magnitude, sums and differences are exact,
/// so dyadic refinement never loses a bit of the coarse increment.
inline constexpr double kIncrementQuantum = 0x1p-48;
inline constexpr double kLatticeBound = 16.0;

/// Rounds `x` to the increment lattice (identity when |x| >= kLatticeBound).
double snap_to_lattice(double x);

/// Splits `eps` into (e1, e2) with e1 + e2 == eps. The split is exact in
/// floating point whenever eps lies on the increment lattice; e1 is snapped
/// onto the lattice, which moves it by at most kIncrementQuantum / 2.
std::pair<double, double> split_exact(double eps, double e1_proposal);

/// Levy refinement of the increment `eps` over an interval of length `dt`:
/// the first half-increment is drawn from the bridge law N(eps/2, dt/4) and
/// the second is the exact remainder.
template <class URBG>
std::pair<double, double> refine_increment(double eps, double dt, URBG& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double e1 = 0.5 * eps + 0.5 * std::sqrt(dt) * normal(rng);
  return split_exact(eps, e1);
}

/// Brownian path addressed by (coarse step, dyadic node). Every increment is
/// a pure function of its address, so the realised path does not depend on
/// which intervals an adaptive scheme decides to refine.
///
/// Node ids follow heap numbering: the coarse interval is node 1, the halves
/// of node n are 2n and 2n + 1.
class BrownianTree {
 public:
  explicit BrownianTree(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Increment over coarse step `n` of length `dt`: N(0, dt).
  double coarse(std::uint64_t n, double dt) const;

  /// Splits the increment `eps` of node `node` (length `dt`) within coarse
  /// step `n` into its two children.
  std::pair<double, double> split(std::uint64_t n, std::uint64_t node, double eps,
                                  double dt) const;

 private:
  std::uint64_t seed_;
};

}  // namespace dqd
