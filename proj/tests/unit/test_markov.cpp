#include <doctest.h>

#include <cmath>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "dqd/markov.hpp"
#include "support.hpp"

using namespace dqd;
using C = CornerLabel;
using test::rel_diff;

namespace {

const ModelParams kStrongBias{0.02, 0.02, 2.0, -2.0, 1.0};

Eigen::Vector3d vec(const OccupationVector& p) { return {p.pi_0, p.pi_l, p.pi_r}; }

double tv_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return 0.5 * (a - b).cwiseAbs().sum();
}

}  // namespace

TEST_CASE("rates") {
  const auto r = rates(kStrongBias, MeasurementConfig::symmetric(15.0));
  CHECK(r.l_0L == doctest::Approx(0.02 * std::exp(2.0)).epsilon(1e-15));
  CHECK(r.l_L0 == 0.02);
  CHECK(r.l_0R == doctest::Approx(0.02 * std::exp(-2.0)).epsilon(1e-15));
  CHECK(r.l_R0 == 0.02);
  CHECK(r.l_LR == doctest::Approx(1.0 / 225.01).epsilon(1e-15));
  CHECK(r.l_RL == r.l_LR);

  auto p = kStrongBias;
  p.u = 0.0;
  CHECK(rates(p, MeasurementConfig::symmetric(15.0)).l_LR == 0.0);
  p = ModelParams{0.03, 0.05, 0.0, 0.0, 1.0};
  const auto z = rates(p, MeasurementConfig::symmetric(3.0));
  CHECK(z.l_0L == z.l_L0);
  CHECK(z.l_0R == z.l_R0);

  CHECK(r.rate(C::Left, C::Right) == r.l_LR);
  CHECK(r.rate(C::Left, C::Left) == 0.0);
  CHECK(r.exit_rate(C::Zero) == doctest::Approx(r.l_0L + r.l_0R));
}

TEST_CASE("stationary law: closed form, linear solve, flux and mean state agree") {
  test::Rng rng(81);
  double worst_pi = 0.0, worst_flux = 0.0, worst_mq = 0.0, worst_diag = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = test::random_params(rng);
    const auto m = test::random_measurement(rng);
    const auto r = rates(p, m);
    const auto lin = stationary(r);
    const auto closed = stationary_closed_form(p, m);
    for (C c : {C::Zero, C::Left, C::Right}) worst_pi = std::max(worst_pi, rel_diff(lin[c], closed[c]));

    const double f = analytic_flux(p, m);
    const double f_pi = stationary_flux(r, lin);
    // the flux is a difference of two terms; measure the error on their scale
    const double scale = r.l_LR * (lin.pi_l + lin.pi_r);
    worst_flux = std::max(worst_flux, std::abs(f - f_pi) / scale);

    const auto mean = mean_steady_state(p, m);
    worst_mq = std::max(worst_mq, std::abs(p.u * mean.k - f) / scale);
    worst_diag = std::max({worst_diag, rel_diff(mean.q0, lin.pi_0), rel_diff(mean.ql, lin.pi_l),
                           rel_diff(mean.qr, lin.pi_r)});

    // residual and normalisation of the linear solve
    REQUIRE((r.generator() * vec(lin)).cwiseAbs().maxCoeff() <= 1e-15 * r.generator().norm());
    REQUIRE(lin.sum() == doctest::Approx(1.0).epsilon(1e-14));
  }
  MESSAGE("worst relative deviations: pi " << worst_pi << ", flux " << worst_flux << ", u K "
                                           << worst_mq << ", diag " << worst_diag);
  CHECK(worst_pi <= 1e-12);
  CHECK(worst_flux <= 1e-12);
  CHECK(worst_mq <= 1e-12);
  CHECK(worst_diag <= 1e-12);
}

TEST_CASE("stationary law at the reference point") {
  const auto m = MeasurementConfig::symmetric(15.0);
  const auto pi = stationary(rates(kStrongBias, m));
  CHECK(pi.pi_0 == doctest::Approx(0.1173).epsilon(1e-3));
  CHECK(pi.pi_l == doctest::Approx(0.7359).epsilon(1e-3));
  CHECK(pi.pi_r == doctest::Approx(0.1468).epsilon(1e-3));
  CHECK(analytic_flux(kStrongBias, m) == doctest::Approx(0.0026182).epsilon(1e-4));
  // strong-measurement approximation, up to sub-leading terms
  CHECK(analytic_flux(kStrongBias, m) ==
        doctest::Approx(analytic_flux_strong_limit(kStrongBias, 15.0)).epsilon(0.5));
  CHECK(analytic_flux(kStrongBias, m) < analytic_flux_strong_limit(kStrongBias, 15.0));
}

TEST_CASE("symmetric reservoirs") {
  const ModelParams p{0.04, 0.04, 0.7, 0.7, 1.3};
  const auto m = MeasurementConfig::symmetric(6.0);
  const auto pi = stationary(rates(p, m));
  CHECK(pi.pi_l == doctest::Approx(pi.pi_r).epsilon(1e-14));
  CHECK(pi.pi_l == doctest::Approx(p.m_l() * pi.pi_0).epsilon(1e-13));
  CHECK(analytic_flux(p, m) == 0.0);
}

TEST_CASE("flux antisymmetry and strong limit") {
  test::Rng rng(82);
  for (int i = 0; i < 200; ++i) {
    auto p = test::random_params(rng);
    p.b = p.a;
    const auto m = test::random_measurement(rng);
    auto q = p;
    std::swap(q.beta_mu_l, q.beta_mu_r);
    REQUIRE(analytic_flux(q, m) == doctest::Approx(-analytic_flux(p, m)).epsilon(1e-13));
  }
  const double h = 1e3;
  const double ratio = analytic_flux(kStrongBias, MeasurementConfig::symmetric(h)) /
                       analytic_flux_strong_limit(kStrongBias, h);
  CHECK(ratio == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("degenerate chains are reported") {
  MarkovRates r{0.1, 0.1, 0.0, 0.0, 0.0, 0.0};  // R is cut off
  CHECK_THROWS_AS(stationary(r), NonErgodicError);
  ModelParams p{0.0, 0.0, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(mean_steady_state(p, MeasurementConfig{}), SingularSystemError);
}

TEST_CASE("mean steady state without tunnelling is the Gibbs state") {
  const ModelParams p{0.03, 0.07, 0.4, 0.4, 0.0};
  const auto s = mean_steady_state(p, MeasurementConfig::symmetric(4.0));
  const double z = 1.0 + 2.0 * p.m_l();
  CHECK(s.q0 == doctest::Approx(1.0 / z).epsilon(1e-14));
  CHECK(s.ql == doctest::Approx(p.m_l() / z).epsilon(1e-14));
  CHECK(s.k == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
}

TEST_CASE("master equation") {
  const auto r = rates({0.02, 0.02, 1.0, -1.0, 1.0}, MeasurementConfig::symmetric(7.0));
  const auto pi = stationary(r);

  SUBCASE("stationary law is a fixed point") {
    const auto next = master_step(pi, r, 0.5);
    CHECK(next.pi_0 == doctest::Approx(pi.pi_0).epsilon(1e-14));
    CHECK(next.pi_l == doctest::Approx(pi.pi_l).epsilon(1e-14));
    CHECK(next.pi_r == doctest::Approx(pi.pi_r).epsilon(1e-14));
  }
  SUBCASE("total probability is preserved") {
    test::Rng rng(83);
    for (int i = 0; i < 1000; ++i) {
      const double x = test::uniform(rng, 0, 1), y = test::uniform(rng, 0, 1 - x);
      const OccupationVector v{1.0 - x - y, x, y};
      const auto n = master_step(v, r, test::uniform(rng, 0.0, 5.0));
      REQUIRE(n.sum() == doctest::Approx(v.sum()).epsilon(4e-16));
    }
  }
  SUBCASE("relaxation follows the matrix exponential and contracts") {
    const Eigen::Matrix3d g = r.generator();
    const Eigen::Vector3d target = vec(pi);
    // largest deviation from exp(G t) over [0, 200], sampled every 1 time unit
    auto relax = [&](double dt) {
      OccupationVector cur{1.0, 0.0, 0.0};
      double prev_exact = 1.0, prev_euler = 1.0, worst = 0.0;
      const int per_unit = static_cast<int>(std::lround(1.0 / dt));
      for (int step = 1; step <= 200 * per_unit; ++step) {
        cur = master_step(cur, r, dt);
        if (step % per_unit != 0) continue;
        const Eigen::Vector3d exact = (g * (step * dt)).exp() * Eigen::Vector3d(1, 0, 0);
        worst = std::max(worst, (vec(cur) - exact).cwiseAbs().maxCoeff());
        const double d_exact = tv_distance(exact, target), d_euler = tv_distance(vec(cur), target);
        REQUIRE(d_exact <= prev_exact);
        REQUIRE(d_euler <= prev_euler);
        prev_exact = d_exact;
        prev_euler = d_euler;
      }
      CHECK(prev_exact < 1e-2);
      return worst;
    };
    const double e1 = relax(0.02), e2 = relax(0.01);
    CHECK(e2 < 2e-4);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));  // first order in dt
  }
  SUBCASE("rejects steps that overshoot") {
    CHECK_THROWS_AS(master_step(pi, r, 1.0 / r.exit_rate(C::Zero) * 1.01), std::invalid_argument);
  }
}

TEST_CASE("feedback bound") {
  const ModelParams zero_bias{0.02, 0.02, 0.0, 0.0, 1.0};
  CHECK(feedback_flux_bound(zero_bias, 5.0, 15.0) == doctest::Approx(8.0 / 675.0).epsilon(1e-14));
  CHECK(feedback_flux_bound(zero_bias, 15.0, 15.0) == 0.0);
  CHECK(feedback_flux_bound_exact(zero_bias, 15.0, 15.0) ==
        doctest::Approx(0.0).scale(1.0).epsilon(1e-16));
  // the exact chain approaches the limit form as both strengths grow
  const double big = 200.0;
  CHECK(feedback_flux_bound_exact(zero_bias, big, 3 * big) ==
        doctest::Approx(feedback_flux_bound(zero_bias, big, 3 * big)).epsilon(0.02));
  CHECK(feedback_flux_bound_exact(zero_bias, 5.0, 15.0) > 0.0);
  CHECK(feedback_flux_bound_exact(zero_bias, 5.0, 15.0) < feedback_flux_bound(zero_bias, 5.0, 15.0));
}

TEST_CASE("chain sampler") {
  SUBCASE("two-state chain has exponential holding times") {
    const MarkovRates r{0.5, 0.2, 0.0, 0.0, 0.0, 0.0};
    const auto path = sample_chain(r, 1e5, 84);
    double t0 = 0.0, tl = 0.0, last = 0.0;
    std::size_t n0 = 0, nl = 0;
    std::vector<double> z;
    for (const auto& e : path.events) {
      REQUIRE(e.to != C::Right);
      const double hold = e.t - last;
      if (e.from == C::Zero) {
        t0 += hold;
        ++n0;
        z.push_back(hold * r.l_0L);
      } else {
        tl += hold;
        ++nl;
      }
      last = e.t;
    }
    CHECK(t0 / n0 == doctest::Approx(2.0).epsilon(3.0 / std::sqrt(n0)));
    CHECK(tl / nl == doctest::Approx(5.0).epsilon(3.0 / std::sqrt(nl)));
    // standardised Exp(1) holding times against their CDF
    std::sort(z.begin(), z.end());
    double d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double f = 1.0 - std::exp(-z[i]);
      d = std::max({d, (i + 1.0) / z.size() - f, f - double(i) / z.size()});
    }
    CHECK(d < test::ks_critical_1pct(z.size()));
  }
  SUBCASE("occupation and flux converge to the master equation") {
    const auto r = rates(kStrongBias, MeasurementConfig::symmetric(3.0));
    const auto pi = stationary(r);
    const double f = stationary_flux(r, pi);
    // 100 independent stationary batches give the standard errors
    const int batches = 100;
    const double T = 1e4;
    test::Rng rng(85);
    std::vector<std::array<double, 3>> occ;
    std::vector<double> flux;
    for (int b = 0; b < batches; ++b) {
      const double u = test::uniform(rng, 0.0, 1.0);
      const C start = u < pi.pi_0 ? C::Zero : (u < pi.pi_0 + pi.pi_l ? C::Left : C::Right);
      const auto path = sample_chain(r, T, 1000 + b, start);
      REQUIRE(path.occupation[0] + path.occupation[1] + path.occupation[2] ==
              doctest::Approx(T).epsilon(1e-12));
      occ.push_back({path.occupation[0] / T, path.occupation[1] / T, path.occupation[2] / T});
      std::int64_t net = 0;
      for (const auto& e : path.events) {
        if (e.from == C::Left && e.to == C::Right) ++net;
        if (e.from == C::Right && e.to == C::Left) --net;
      }
      flux.push_back(static_cast<double>(net) / T);
    }
    auto mean_se = [&](auto get) {
      double m = 0.0, v = 0.0;
      for (int b = 0; b < batches; ++b) m += get(b);
      m /= batches;
      for (int b = 0; b < batches; ++b) v += (get(b) - m) * (get(b) - m);
      return std::pair{m, std::sqrt(v / (batches - 1) / batches)};
    };
    for (int c = 0; c < 3; ++c) {
      const auto [m, se] = mean_se([&](int b) { return occ[b][c]; });
      CHECK(std::abs(m - vec(pi)(c)) <= 3.0 * se);
    }
    const auto [fm, fse] = mean_se([&](int b) { return flux[b]; });
    CHECK(std::abs(fm - f) <= 3.0 * fse);
  }
  SUBCASE("deterministic given the seed") {
    const auto r = rates(kStrongBias, MeasurementConfig::symmetric(5.0));
    CHECK(sample_chain(r, 1e3, 7).events == sample_chain(r, 1e3, 7).events);
    CHECK(sample_chain(r, 1e3, 7).events != sample_chain(r, 1e3, 8).events);
  }
  CHECK_THROWS_AS(sample_chain(MarkovRates{}, 0.0, 1), std::invalid_argument);
}
