#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dqd/analysis.hpp"
#include "dqd/sde.hpp"
#include "support.hpp"

using namespace dqd;

namespace {

const ModelParams kModerateBias{0.02, 0.02, 1.0, -1.0, 1.0};
constexpr double kInf = std::numeric_limits<double>::infinity();

struct SubstepLog final : TrajectoryObserver {
  std::vector<double> t, dt, eps;
  std::vector<DensityState> states;
  std::vector<TrajectorySample> samples;
  void on_substep(double tt, const DensityState& s, double d, double e, int) override {
    t.push_back(tt);
    dt.push_back(d);
    eps.push_back(e);
    states.push_back(s);
  }
  void on_sample(const TrajectorySample& s) override { samples.push_back(s); }
};

double max_abs_diff(const DensityState& a, const DensityState& b) {
  const auto d = a - b;
  return std::max({std::abs(d.dq0), std::abs(d.dql), std::abs(d.dqr), std::abs(d.dk)});
}

}  // namespace

TEST_CASE("rk2 without monitoring is explicit Euler") {
  test::Rng rng(51);
  for (int i = 0; i < 200; ++i) {
    auto s = test::random_state(rng);
    const auto p = test::random_params(rng);
    const double dt = 1e-3, eps = test::uniform(rng, -0.1, 0.1);
    const auto euler = s + drift(s, p, MeasurementConfig{}) * dt;
    const auto out = rk2_step(s, p, MeasurementConfig{}, dt, eps);
    REQUIRE(max_abs_diff(out, project(euler).state) <= 1e-15);
  }
}

TEST_CASE("rk2 correction vanishes when eps^2 = dt") {
  test::Rng rng(52);
  for (int i = 0; i < 200; ++i) {
    const auto s = test::random_state(rng);
    const auto p = test::random_params(rng);
    const auto m = MeasurementConfig::symmetric(2.0);
    const double dt = 1e-5;
    const auto expected = s + (drift(s, p, m) * dt + diffusion(s, m) * std::sqrt(dt));
    const auto pr = project(expected);
    if (pr.correction > 0.0) continue;  // stepped outside; compare only interior steps
    REQUIRE(max_abs_diff(rk2_step(s, p, m, dt, std::sqrt(dt)), expected) <= 1e-15);
  }
}

TEST_CASE("rk2 rejects non-finite input") {
  CHECK_THROWS_AS(rk2_step(DensityState{}, ModelParams{}, MeasurementConfig{}, 0.01, kInf),
                  std::domain_error);
}

TEST_CASE("strong order on geometric Brownian motion") {
  // dY = -lambda Y dt + sigma Y dW, Y_T = exp((-lambda - sigma^2/2) T + sigma W_T)
  const double lambda = 1.0, sigma = 1.0, T = 1.0;
  const int finest = 12, paths = 4000;
  const int n_fine = 1 << finest;
  std::vector<double> err(7, 0.0);
  std::vector<double> dw(n_fine);
  SplitMix64 rng(53);
  std::normal_distribution<double> normal;
  auto drift_fn = [&](double y) { return -lambda * y; };
  auto diff_fn = [&](double y) { return sigma * y; };

  for (int path = 0; path < paths; ++path) {
    double w = 0.0;
    for (auto& x : dw) {
      x = std::sqrt(T / n_fine) * normal(rng);
      w += x;
    }
    const double exact = std::exp((-lambda - 0.5 * sigma * sigma) * T + sigma * w);
    for (int level = 6; level <= finest; ++level) {
      const int n = 1 << level, stride = n_fine / n;
      const double dt = T / n;
      double y = 1.0;
      for (int i = 0; i < n; ++i) {
        double eps = 0.0;
        for (int j = 0; j < stride; ++j) eps += dw[i * stride + j];
        y = rk2_update(y, drift_fn, diff_fn, dt, eps);
      }
      err[level - 6] += std::abs(y - exact) / paths;
    }
  }
  // least-squares slope of log2(err) against log2(dt)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < 7; ++i) {
    const double x = -(i + 6.0), y = std::log2(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (7 * sxy - sx * sy) / (7 * sxx - sx * sx);
  MESSAGE("GBM strong-order slope " << slope);
  CHECK(slope >= 1.0);
}

TEST_CASE("error cost") {
  CHECK(error_cost(DensityState::corner_zero(), DensityState::corner_zero()) == 0.0);
  CHECK(error_cost({0.0, 0.5, 0.5, 0.3}, {0.0, 0.5, 0.5, 0.1}) == doctest::Approx(0.02));
  CHECK(error_cost(DensityState::corner_zero(), DensityState::corner_left()) == 2.0);
}

TEST_CASE("adaptive step at a quiescent corner") {
  IntegratorConfig cfg;
  cfg.err_tol = 1.0;
  cfg.noise_step_cap = kInf;
  const BrownianTree tree(54);
  const auto m = MeasurementConfig::symmetric(7.0);
  const double dt = 1e-2;
  const double eps = tree.coarse(0, dt);
  const auto s = DensityState::corner_zero();
  const auto r = adaptive_step(s, kModerateBias, m, 0.0, dt, eps, cfg, tree, 0);
  CHECK(r.depth_used == 0);
  CHECK(r.leaves == 1);
  // the accepted value is the two-half-step result on the refined path
  const auto [e1, e2] = tree.split(0, 1, eps, dt);
  const auto two = rk2_step(rk2_step(s, kModerateBias, m, dt / 2, e1), kModerateBias, m, dt / 2, e2);
  CHECK(r.state == two);
  CHECK(error_cost(r.state, rk2_step(s, kModerateBias, m, dt, eps)) <= cfg.err_tol);
}

TEST_CASE("adaptive step refines in the middle of a jump") {
  IntegratorConfig cfg;  // defaults
  cfg.noise_step_cap = kInf;  // refinement must come from the error test alone
  const BrownianTree tree(55);
  const auto m = MeasurementConfig::symmetric(7.0);
  const DensityState mid_jump{0.5, 0.5, 0.0, 0.0};
  for (std::uint64_t n = 0; n < 100; ++n) {
    const double eps = tree.coarse(n, cfg.dt_coarse);
    const auto r = adaptive_step(mid_jump, kModerateBias, m, 0.0, cfg.dt_coarse, eps, cfg, tree, n);
    REQUIRE(r.depth_used > 0);
  }
}

TEST_CASE("accepted sub-steps respect the tolerance") {
  const BrownianTree tree(56);
  const auto m = MeasurementConfig::symmetric(7.0);
  const DensityState mid_jump{0.5, 0.5, 0.0, 0.0};
  // halving err_tol halves the bound on every accepted per-step cost
  for (double tol : {1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
    IntegratorConfig cfg;
    cfg.err_tol = tol;
    cfg.noise_step_cap = kInf;
    double worst = 0.0;
    for (std::uint64_t n = 0; n < 50; ++n) {
      const double eps = tree.coarse(n, cfg.dt_coarse);
      const auto r = adaptive_step(mid_jump, kModerateBias, m, 0.0, cfg.dt_coarse, eps, cfg, tree, n);
      REQUIRE_FALSE(r.capped);
      worst = std::max(worst, r.max_cost);
    }
    CHECK(worst <= tol);
  }
}

TEST_CASE("noise-step guard") {
  IntegratorConfig cfg;
  cfg.err_tol = 1.0;  // guard only
  const BrownianTree tree(57);
  const auto m = MeasurementConfig::symmetric(7.0);
  const double rate = m.corner_noise_rate();
  SubstepLog log;
  TrajectoryObserver* obs[] = {&log};
  const double eps = tree.coarse(0, cfg.dt_coarse);
  const auto r = adaptive_step(DensityState::corner_zero(), kModerateBias, m, 0.0, cfg.dt_coarse, eps,
                               cfg, tree, 0, obs);
  CHECK(r.depth_used > 0);
  double total = 0.0;
  for (double d : log.dt) {
    REQUIRE(d * rate <= cfg.noise_step_cap);
    total += d;
  }
  CHECK(total == doctest::Approx(cfg.dt_coarse).epsilon(1e-14));
  // the guard never splits beyond the point where it is satisfied
  for (double d : log.dt) REQUIRE(2.0 * d * rate > cfg.noise_step_cap);

  SUBCASE("disabled by an infinite cap") {
    cfg.noise_step_cap = kInf;
    const auto r0 = adaptive_step(DensityState::corner_zero(), kModerateBias, m, 0.0, cfg.dt_coarse, eps,
                                  cfg, tree, 0);
    CHECK(r0.depth_used == 0);
  }
}

TEST_CASE("sub-step increments re-aggregate to the coarse increment exactly") {
  const auto m = MeasurementConfig::symmetric(7.0);
  const BrownianTree tree(58);
  IntegratorConfig cfg;
  test::Rng rng(59);
  for (std::uint64_t n = 0; n < 200; ++n) {
    SubstepLog log;
    TrajectoryObserver* obs[] = {&log};
    const auto s = test::random_state(rng);
    const double eps = tree.coarse(n, cfg.dt_coarse);
    (void)adaptive_step(project(s).state, kModerateBias, m, 1.0, cfg.dt_coarse, eps, cfg, tree, n, obs);
    double sum = 0.0;
    for (double e : log.eps) sum += e;
    REQUIRE(sum == eps);
    for (std::size_t i = 1; i < log.t.size(); ++i) REQUIRE(log.t[i] > log.t[i - 1]);
    REQUIRE(log.t.back() == doctest::Approx(1.0 + cfg.dt_coarse).epsilon(1e-14));
  }
}

TEST_CASE("integrate is deterministic and emits valid states") {
  const auto m = MeasurementConfig::symmetric(7.0);
  IntegratorConfig cfg;
  cfg.seed = 60;
  auto once = [&] {
    SubstepLog log;
    TrajectoryObserver* obs[] = {&log};
    FixedMeasurement fixed(m);
    (void)integrate(DensityState::corner_zero(), kModerateBias, fixed, 20.0, cfg, obs);
    return log;
  };
  const auto a = once(), b = once();
  REQUIRE(a.states.size() == b.states.size());
  CHECK(a.states == b.states);
  CHECK(a.eps == b.eps);
  REQUIRE(a.samples.size() == b.samples.size());
  bool same = true;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    same = same && a.samples[i].t == b.samples[i].t && a.samples[i].state == b.samples[i].state &&
           a.samples[i].x == b.samples[i].x;
  }
  CHECK(same);
  CHECK(a.samples.size() == 2001);
  for (const auto& s : a.samples) REQUIRE(is_valid(s.state, kTraceTolerance));
  for (const auto& s : a.states) REQUIRE(is_valid(s, kTraceTolerance));

  cfg.seed = 61;
  SubstepLog c;
  TrajectoryObserver* obs[] = {&c};
  FixedMeasurement fixed(m);
  (void)integrate(DensityState::corner_zero(), kModerateBias, fixed, 20.0, cfg, obs);
  CHECK(c.samples.back().x != a.samples.back().x);
}

TEST_CASE("record accumulates drift plus the driving increments") {
  const auto m = MeasurementConfig::symmetric(5.0);
  IntegratorConfig cfg;
  cfg.seed = 62;
  SubstepLog log;
  TrajectoryObserver* obs[] = {&log};
  FixedMeasurement fixed(m);
  (void)integrate(DensityState::corner_zero(), kModerateBias, fixed, 5.0, cfg, obs);
  const BrownianTree tree(cfg.seed);
  for (std::size_t n = 0; n + 1 < log.samples.size(); ++n) {
    const auto& a = log.samples[n];
    const auto& b = log.samples[n + 1];
    const double dt = b.t - a.t;
    const double expected = record_drift(a.state, m) * cfg.dt_coarse + tree.coarse(n, cfg.dt_coarse);
    REQUIRE(b.x - a.x == doctest::Approx(expected).epsilon(1e-9).scale(1.0));
    REQUIRE(dt == doctest::Approx(cfg.dt_coarse));
  }
}

TEST_CASE("unmonitored Gibbs state stays put") {
  const ModelParams p{0.02, 0.05, 0.7, -0.3, 0.0};
  const double z = 1.0 + p.m_l() + p.m_r();
  const DensityState gibbs{1.0 / z, p.m_l() / z, p.m_r() / z, 0.0};
  IntegratorConfig cfg;
  SubstepLog log;
  TrajectoryObserver* obs[] = {&log};
  FixedMeasurement fixed(MeasurementConfig{});
  (void)integrate(gibbs, p, fixed, 50.0, cfg, obs);
  double worst = 0.0;
  for (const auto& s : log.samples) worst = std::max(worst, max_abs_diff(s.state, gibbs));
  CHECK(worst <= 1e-12);
}

TEST_CASE("integrate argument checks") {
  FixedMeasurement fixed(MeasurementConfig::symmetric(1.0));
  IntegratorConfig cfg;
  CHECK_THROWS_AS(integrate(DensityState{}, kModerateBias, fixed, 0.0, cfg, {}), std::invalid_argument);
  CHECK_THROWS_AS(integrate({0.5, 0.6, 0.0, 0.0}, kModerateBias, fixed, 1.0, cfg, {}),
                  std::invalid_argument);
  cfg.err_tol = 0.0;
  CHECK_THROWS_AS(integrate(DensityState{}, kModerateBias, fixed, 1.0, cfg, {}), std::invalid_argument);
}

TEST_CASE("sample trajectory at h = 7 dwells on the corners") {
  const auto m = MeasurementConfig::symmetric(7.0);
  IntegratorConfig cfg;
  cfg.seed = 63;
  SubstepLog log;
  JumpDetector jumps;
  TrajectoryObserver* obs[] = {&log, &jumps};
  FixedMeasurement fixed(m);
  (void)integrate(DensityState::corner_zero(), kModerateBias, fixed, 300.0, cfg, obs);
  std::size_t in_corner = 0;
  for (const auto& s : log.samples) in_corner += classify(s.state) != CornerLabel::Bulk;
  const double frac = static_cast<double>(in_corner) / log.samples.size();
  MESSAGE("corner fraction " << frac << ", events " << jumps.events().size());
  CHECK(frac >= 0.95);
  CHECK(jumps.events().size() >= 2);
}
