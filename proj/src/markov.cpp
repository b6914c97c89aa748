#include "dqd/markov.hpp"

#include <cmath>
#include <random>

#include <Eigen/LU>

#include "dqd/noise.hpp"

namespace dqd {

FluxEstimate FluxEstimate::from_counts(std::uint64_t n_lr, std::uint64_t n_rl, double t_total) {
  FluxEstimate f;
  f.n_lr = n_lr;
  f.n_rl = n_rl;
  f.t_total = t_total;
  if (t_total > 0.0) {
    f.flux = (static_cast<double>(n_lr) - static_cast<double>(n_rl)) / t_total;
    f.mc_error = std::sqrt(static_cast<double>(n_lr + n_rl)) / t_total;
  }
  return f;
}

double MarkovRates::rate(CornerLabel from, CornerLabel to) const {
  using C = CornerLabel;
  if (from == C::Zero && to == C::Left) return l_0L;
  if (from == C::Left && to == C::Zero) return l_L0;
  if (from == C::Zero && to == C::Right) return l_0R;
  if (from == C::Right && to == C::Zero) return l_R0;
  if (from == C::Left && to == C::Right) return l_LR;
  if (from == C::Right && to == C::Left) return l_RL;
  return 0.0;
}

double MarkovRates::exit_rate(CornerLabel from) const {
  switch (from) {
    case CornerLabel::Zero: return l_0L + l_0R;
    case CornerLabel::Left: return l_L0 + l_LR;
    case CornerLabel::Right: return l_R0 + l_RL;
    default: return 0.0;
  }
}

Eigen::Matrix3d MarkovRates::generator() const {
  Eigen::Matrix3d g;
  // columns: source state, rows: destination
  g << -(l_0L + l_0R), l_L0, l_R0,
       l_0L, -(l_L0 + l_LR), l_RL,
       l_0R, l_LR, -(l_R0 + l_RL);
  return g;
}

double OccupationVector::operator[](CornerLabel c) const {
  switch (c) {
    case CornerLabel::Zero: return pi_0;
    case CornerLabel::Left: return pi_l;
    case CornerLabel::Right: return pi_r;
    default: return 0.0;
  }
}

MarkovRates rates(const ModelParams& p, const MeasurementConfig& m) {
  const double tunnel = p.u * p.u / m.nu(p);
  return {p.a * p.m_l(), p.a, p.b * p.m_r(), p.b, tunnel, tunnel};
}

OccupationVector master_step(const OccupationVector& pi, const MarkovRates& r, double dt) {
  using C = CornerLabel;
  for (C c : {C::Zero, C::Left, C::Right}) {
    if (dt * r.exit_rate(c) > 1.0) {
      throw std::invalid_argument("master_step: dt too large for explicit Euler");
    }
  }
  const Eigen::Vector3d v(pi.pi_0, pi.pi_l, pi.pi_r);
  const Eigen::Vector3d next = v + dt * (r.generator() * v);
  const double total = pi.sum();
  return {total - next(1) - next(2), next(1), next(2)};
}

OccupationVector stationary(const MarkovRates& r) {
  Eigen::Matrix3d a = r.generator();
  a.row(0).setOnes();
  const Eigen::Vector3d rhs(1.0, 0.0, 0.0);
  Eigen::FullPivLU<Eigen::Matrix3d> rank_check(a);
  rank_check.setThreshold(1e-13);
  if (!rank_check.isInvertible()) {
    throw NonErgodicError("stationary: rate matrix has no unique stationary law");
  }
  const Eigen::Vector3d x = a.partialPivLu().solve(rhs);
  return {x(0), x(1), x(2)};
}

OccupationVector stationary_closed_form(const ModelParams& p, const MeasurementConfig& m) {
  const double a = p.a, b = p.b, u2 = p.u * p.u;
  const double ml = p.m_l(), mr = p.m_r(), nu = m.nu(p);
  const double delta = a * b * (ml + mr + 1.0) * nu + (a * (2.0 * ml + 1.0) + b * (2.0 * mr + 1.0)) * u2;
  return {
      (a * b * nu + (a + b) * u2) / delta,
      (a * b * ml * nu + (a * ml + b * mr) * u2) / delta,
      (a * b * mr * nu + (a * ml + b * mr) * u2) / delta,
  };
}

double analytic_flux(const ModelParams& p, const MeasurementConfig& m) {
  const double u2 = p.u * p.u;
  const double ml = p.m_l(), mr = p.m_r();
  const double denom =
      m.nu(p) * (ml + mr + 1.0) + u2 * ((1.0 + 2.0 * ml) / p.b + (1.0 + 2.0 * mr) / p.a);
  return (ml - mr) * u2 / denom;
}

double analytic_flux_strong_limit(const ModelParams& p, double h) {
  const double ml = p.m_l(), mr = p.m_r();
  return (ml - mr) * p.u * p.u / (h * h * (ml + mr + 1.0));
}

DensityState mean_steady_state(const ModelParams& p, const MeasurementConfig& m) {
  const double a = p.a, b = p.b, u = p.u;
  const double ml = p.m_l(), mr = p.m_r(), nu = m.nu(p);
  // unknowns (Q0, Ql, Qr, K); the reservoir balance for Q0 is the sum of the
  // Ql and Qr rows and is replaced by the trace condition.
  Eigen::Matrix4d sys;
  sys << a * ml, -a, 0.0, -u,
         b * mr, 0.0, -b, u,
         0.0, u, -u, -nu,
         1.0, 1.0, 1.0, 0.0;
  const Eigen::Vector4d rhs(0.0, 0.0, 0.0, 1.0);
  Eigen::FullPivLU<Eigen::Matrix4d> rank_check(sys);
  rank_check.setThreshold(1e-13);
  if (!rank_check.isInvertible()) {
    throw SingularSystemError("mean_steady_state: singular system for these parameters");
  }
  const Eigen::Vector4d x = sys.partialPivLu().solve(rhs);
  return {x(0), x(1), x(2), x(3)};
}

double feedback_flux_bound(const ModelParams& p, double h_min, double h_max) {
  const double ml = p.m_l(), mr = p.m_r();
  return p.u * p.u / (1.0 + ml + mr) * (ml / (h_min * h_min) - mr / (h_max * h_max));
}

double feedback_flux_bound_exact(const ModelParams& p, double h_min, double h_max) {
  MarkovRates r = rates(p, MeasurementConfig::symmetric(h_min));
  r.l_RL = p.u * p.u / MeasurementConfig::symmetric(h_max).nu(p);
  return stationary_flux(r, stationary(r));
}

ChainPath sample_chain(const MarkovRates& r, double T, std::uint64_t seed, CornerLabel start) {
  using C = CornerLabel;
  if (!(T > 0.0)) throw std::invalid_argument("sample_chain: T must be > 0");
  if (start == C::Bulk) throw std::invalid_argument("sample_chain: start must be a corner");

  SplitMix64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ChainPath path;
  path.t_end = T;

  C state = start;
  double t = 0.0;
  while (true) {
    const double out = r.exit_rate(state);
    if (out <= 0.0) {
      path.occupation[index_of(state)] += T - t;
      break;
    }
    const double wait = std::exponential_distribution<double>(out)(rng);
    if (t + wait >= T) {
      path.occupation[index_of(state)] += T - t;
      break;
    }
    path.occupation[index_of(state)] += wait;
    t += wait;

    C next = C::Zero;
    double acc = 0.0;
    const double pick = unif(rng) * out;
    for (C c : {C::Zero, C::Left, C::Right}) {
      const double rc = r.rate(state, c);
      if (c == state || rc <= 0.0) continue;
      acc += rc;
      next = c;
      if (pick < acc) break;
    }
    path.events.push_back({t, state, next});
    state = next;
  }
  return path;
}

}  // namespace dqd
