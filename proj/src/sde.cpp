#include "dqd/sde.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace dqd {

void IntegratorConfig::validate() const {
  std::ostringstream os;
  if (!(std::isfinite(dt_coarse) && dt_coarse > 0.0)) os << "dt_coarse must be > 0; ";
  if (!(std::isfinite(err_tol) && err_tol > 0.0)) os << "err_tol must be > 0; ";
  if (max_depth < 0 || max_depth > 60) os << "max_depth must be in [0, 60]; ";
  if (!(noise_step_cap > 0.0)) os << "noise_step_cap must be > 0; ";
  const auto msg = os.str();
  if (!msg.empty()) throw std::invalid_argument("IntegratorConfig: " + msg);
}

namespace {

// Field constants hoisted out of the inner loop.
struct Fields {
  const ModelParams& p;
  MeasurementConfig m;
  double m_l, m_r, nu;

  double noise_rate;

  Fields(const ModelParams& params, const MeasurementConfig& meas)
      : p(params),
        m(meas),
        m_l(params.m_l()),
        m_r(params.m_r()),
        nu(meas.nu(params)),
        noise_rate(meas.corner_noise_rate()) {}

  DensityState step_raw(const DensityState& s, double dt, double eps) const {
    return rk2_update(
        s, [&](const DensityState& x) { return detail::drift_field(x, p, m_l, m_r, nu); },
        [&](const DensityState& x) { return detail::diffusion_field(x, m); }, dt, eps);
  }
};

struct Trial {
  DensityState state;
  bool ok = true;  // finite and within the projection tolerance
};

Trial trial_step(const Fields& f, const DensityState& s, double dt, double eps) {
  const DensityState raw = f.step_raw(s, dt, eps);
  if (!is_finite(raw)) return {s, false};
  auto [out, corr] = project(raw);
  return {out, corr <= kProjectionTolerance};
}

class Refiner {
 public:
  Refiner(const Fields& f, const IntegratorConfig& cfg, const BrownianTree& tree,
          std::uint64_t n, std::span<TrajectoryObserver* const> obs)
      : f_(f), cfg_(cfg), tree_(tree), n_(n), obs_(obs) {}

  // `coarse` is the single-step trial over this node, or null when the
  // caller has not computed it.
  DensityState node(const DensityState& s, const Trial* coarse_in, double t, double dt,
                    double eps, std::uint64_t id, int level) {
    result.depth_used = std::max(result.depth_used, level);
    const auto [e1, e2] = tree_.split(n_, id, eps, dt);
    const double half = 0.5 * dt;

    if (half * f_.noise_rate > cfg_.noise_step_cap && level < cfg_.max_depth) {
      const DensityState left = node(s, nullptr, t, half, e1, 2 * id, level + 1);
      return node(left, nullptr, t + half, half, e2, 2 * id + 1, level + 1);
    }

    const Trial coarse = coarse_in ? *coarse_in : trial_step(f_, s, dt, eps);
    const Trial mid = trial_step(f_, s, half, e1);
    const Trial fine = trial_step(f_, mid.state, half, e2);

    const bool ok = coarse.ok && mid.ok && fine.ok;
    const double cost =
        ok ? error_cost(coarse.state, fine.state) : std::numeric_limits<double>::infinity();

    if (cost <= cfg_.err_tol || level >= cfg_.max_depth) {
      if (!mid.ok && !is_finite(f_.step_raw(s, half, e1))) {
        throw std::domain_error("adaptive_step: non-finite state at maximum depth");
      }
      if (cost > cfg_.err_tol) result.capped = true;
      result.max_cost = std::max(result.max_cost, cost);
      ++result.leaves;
      for (auto* o : obs_) {
        o->on_substep(t + half, mid.state, half, e1, level + 1);
        o->on_substep(t + dt, fine.state, half, e2, level + 1);
      }
      return fine.state;
    }

    const DensityState left = node(s, &mid, t, half, e1, 2 * id, level + 1);
    return node(left, nullptr, t + half, half, e2, 2 * id + 1, level + 1);
  }

  StepResult result;

 private:
  const Fields& f_;
  const IntegratorConfig& cfg_;
  const BrownianTree& tree_;
  std::uint64_t n_;
  std::span<TrajectoryObserver* const> obs_;
};

}  // namespace

DensityState rk2_step(const DensityState& s, const ModelParams& p, const MeasurementConfig& m,
                      double dt, double eps) {
  if (!is_finite(s) || !std::isfinite(eps)) {
    throw std::domain_error("rk2_step: non-finite input");
  }
  const Fields f(p, m);
  const DensityState raw = f.step_raw(s, dt, eps);
  if (!is_finite(raw)) throw std::domain_error("rk2_step: non-finite result (blow-up)");
  return project_valid(raw);
}

StepResult adaptive_step(const DensityState& s, const ModelParams& p, const MeasurementConfig& m,
                         double t, double dt, double eps, const IntegratorConfig& cfg,
                         const BrownianTree& tree, std::uint64_t coarse_index,
                         std::span<TrajectoryObserver* const> observers) {
  const Fields f(p, m);
  Refiner r(f, cfg, tree, coarse_index, observers);
  r.result.state = r.node(s, nullptr, t, dt, eps, 1, 0);
  return r.result;
}

IntegrationStats integrate(const DensityState& initial, const ModelParams& p,
                           MeasurementController& controller, double T,
                           const IntegratorConfig& cfg,
                           std::span<TrajectoryObserver* const> observers) {
  p.validate();
  cfg.validate();
  if (!(std::isfinite(T) && T > 0.0)) throw std::invalid_argument("integrate: T must be > 0");
  if (!is_valid(initial)) throw std::invalid_argument("integrate: invalid initial state");

  const auto steps = static_cast<std::uint64_t>(std::ceil(T / cfg.dt_coarse - 1e-9));
  const double dt = T / static_cast<double>(steps);
  const BrownianTree tree(cfg.seed);

  IntegrationStats stats;
  TrajectorySample sample{0.0, initial, 0.0, controller.current()};
  for (auto* o : observers) o->on_sample(sample);

  for (std::uint64_t n = 0; n < steps; ++n) {
    const MeasurementConfig m = controller.current();
    const double eps = tree.coarse(n, dt);
    const double dx = record_drift(sample.state, m) * dt + eps;
    StepResult r;
    try {
      r = adaptive_step(sample.state, p, m, sample.t, dt, eps, cfg, tree, n, observers);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "integration failed at t = " << sample.t << ": " << e.what();
      throw IntegrationError(os.str(), sample.t);
    }
    stats.substeps += 2 * static_cast<std::uint64_t>(r.leaves);
    stats.capped_steps += r.capped ? 1 : 0;
    stats.max_depth_used = std::max(stats.max_depth_used, r.depth_used);

    sample.t = static_cast<double>(n + 1) * dt;
    sample.state = r.state;
    sample.x += dx;
    controller.observe(dx, dt);
    sample.h_active = controller.current();
    for (auto* o : observers) o->on_sample(sample);
  }
  stats.coarse_steps = steps;
  return stats;
}

}  // namespace dqd
