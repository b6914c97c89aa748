#include "dqd/model.hpp"

#include <algorithm>
#include <sstream>

namespace dqd {

namespace {

void require_finite(const DensityState& s, const char* where) {
  if (!is_finite(s)) {
    std::ostringstream os;
    os << where << ": non-finite state (" << s.q0 << ", " << s.ql << ", " << s.qr << ", " << s.k
       << ")";
    throw std::domain_error(os.str());
  }
}

}  // namespace

bool is_finite(const DensityState& s) {
  return std::isfinite(s.q0) && std::isfinite(s.ql) && std::isfinite(s.qr) && std::isfinite(s.k);
}

bool is_valid(const DensityState& s, double tol) {
  if (!is_finite(s)) return false;
  if (std::abs(s.trace() - 1.0) > tol) return false;
  for (double q : {s.q0, s.ql, s.qr}) {
    if (q < -tol || q > 1.0 + tol) return false;
  }
  return s.k * s.k <= 4.0 * s.ql * s.qr + tol;
}

void ModelParams::validate() const {
  std::ostringstream os;
  if (!(std::isfinite(a) && a > 0.0)) os << "a must be > 0; ";
  if (!(std::isfinite(b) && b > 0.0)) os << "b must be > 0; ";
  if (!(std::isfinite(u) && u >= 0.0)) os << "u must be >= 0; ";
  if (!std::isfinite(beta_mu_l) || !std::isfinite(m_l())) os << "beta_mu_l out of range; ";
  if (!std::isfinite(beta_mu_r) || !std::isfinite(m_r())) os << "beta_mu_r out of range; ";
  const auto msg = os.str();
  if (!msg.empty()) throw std::invalid_argument("ModelParams: " + msg);
}

StateIncrement drift(const DensityState& s, const ModelParams& p, const MeasurementConfig& m) {
  require_finite(s, "drift");
  return detail::drift_field(s, p, p.m_l(), p.m_r(), m.nu(p));
}

StateIncrement diffusion(const DensityState& s, const MeasurementConfig& m) {
  require_finite(s, "diffusion");
  return detail::diffusion_field(s, m);
}

DriftComponents drift_components(const DensityState& s, const ModelParams& p,
                                 const MeasurementConfig& m) {
  require_finite(s, "drift_components");
  const double a = p.a, b = p.b, u = p.u;
  const double ml = p.m_l(), mr = p.m_r();
  const double dh = m.h_l - m.h_r;

  DriftComponents c;
  c.tunnel = {0.0, -u * s.k, u * s.k, 2.0 * u * (s.ql - s.qr)};
  c.bath = {
      a * s.ql + b * s.qr - (a * ml + b * mr) * s.q0,
      a * ml * s.q0 - a * s.ql,
      -b * s.qr + b * mr * s.q0,
      -0.5 * (a + b) * s.k,
  };
  c.measure = {0.0, 0.0, 0.0, -0.5 * dh * dh * s.k};
  return c;
}

Projection project(const DensityState& s, double trace_tol) {
  const bool in_box = s.q0 >= 0.0 && s.q0 <= 1.0 && s.ql >= 0.0 && s.ql <= 1.0 && s.qr >= 0.0 &&
                      s.qr <= 1.0;
  if (in_box && std::abs(s.trace() - 1.0) <= trace_tol &&
      std::abs(s.k) <= 2.0 * std::sqrt(s.ql * s.qr)) {
    return {s, 0.0};
  }

  DensityState out = s;
  out.q0 = std::clamp(out.q0, 0.0, 1.0);
  out.ql = std::clamp(out.ql, 0.0, 1.0);
  out.qr = std::clamp(out.qr, 0.0, 1.0);
  const double tr = out.trace();
  if (tr <= 0.0) {
    // nothing left to renormalise; fall back to the empty dot
    out = DensityState::corner_zero();
  } else if (std::abs(tr - 1.0) > 0.0) {
    out.q0 /= tr;
    out.ql /= tr;
    out.qr /= tr;
  }
  const double kmax = 2.0 * std::sqrt(out.ql * out.qr);
  out.k = std::clamp(out.k, -kmax, kmax);

  // Renormalisation is itself rounded; accept a trace within trace_tol.
  if (std::abs(out.trace() - 1.0) > trace_tol) {
    out.q0 = 1.0 - out.ql - out.qr;
  }

  const double corr = std::max({std::abs(out.q0 - s.q0), std::abs(out.ql - s.ql),
                                std::abs(out.qr - s.qr), std::abs(out.k - s.k)});
  return {out, corr};
}

DensityState project_valid(const DensityState& s, double trace_tol, double projection_tol) {
  require_finite(s, "project_valid");
  auto [out, corr] = project(s, trace_tol);
  if (corr > projection_tol) {
    std::ostringstream os;
    os << "project_valid: correction " << corr << " exceeds tolerance " << projection_tol;
    throw ProjectionError(os.str(), corr);
  }
  return out;
}

}  // namespace dqd
