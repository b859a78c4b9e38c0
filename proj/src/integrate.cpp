#include "magshell/integrate.hpp"

#include <cmath>

#include "magshell/errors.hpp"

namespace magshell {

namespace detail {

Vec rk4_step(const AmbientField& f, const Vec& c, double dt) {
  Vec k1 = f(c);
  Vec k2 = f(c + 0.5 * dt * k1);
  Vec k3 = f(c + 0.5 * dt * k2);
  Vec k4 = f(c + dt * k3);
  return c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vec rk4_step_controlled(const AmbientField& f, const Vec& c, double dt,
                        double error_cap, int max_halvings) {
  Vec full = rk4_step(f, c, dt);
  if (error_cap <= 0.0) return full;
  Vec half = rk4_step(f, rk4_step(f, c, 0.5 * dt), 0.5 * dt);
  const double err = (full - half).cwiseAbs().maxCoeff();
  if (!half.allFinite() || !full.allFinite()) {
    if (max_halvings <= 0)
      throw IntegrationFailure("step rejection cascade: non-finite state at dt=" +
                               std::to_string(dt));
    return rk4_step_controlled(
        f, rk4_step_controlled(f, c, 0.5 * dt, error_cap, max_halvings - 1),
        0.5 * dt, error_cap, max_halvings - 1);
  }
  if (err <= error_cap) return half;
  if (max_halvings <= 0)
    throw IntegrationFailure("step rejection cascade exhausted (estimate " +
                             std::to_string(err) + ")");
  return rk4_step_controlled(
      f, rk4_step_controlled(f, c, 0.5 * dt, error_cap, max_halvings - 1),
      0.5 * dt, error_cap, max_halvings - 1);
}

}  // namespace detail

namespace {

// Scale the PSL2 matrix entries back to det = 1; returns |det - 1| before.
double renormalize_psl2(Vec& c) {
  const double det = c[0] * c[3] - c[1] * c[2];
  const double res = std::abs(det - 1.0);
  const double s = 1.0 / std::sqrt(std::abs(det));
  c.head(4) *= s;
  return res;
}

}  // namespace

Trajectory integrate(const PhaseState& s, double t_max, double dt,
                     const MagneticSystem& sys, const IntegrateOptions& opt) {
  Trajectory out;
  out.dt = dt;
  out.times.push_back(0.0);
  out.states.push_back(s);
  if (t_max == 0.0) return out;
  if (!(dt > 0.0) || !(t_max > 0.0))
    throw PreconditionFailed("integrate: need dt > 0 and t_max > 0");

  const auto field = [&sys](const Vec& c) { return ambient_field(sys, c); };
  Vec c = pack_state(sys, s);
  const long n_steps = std::lround(t_max / dt);
  const long n = std::max<long>(n_steps, 1);
  const double h = t_max / static_cast<double>(n);
  out.dt = h;
  out.times.reserve(n + 1);
  out.states.reserve(n + 1);
  for (long i = 1; i <= n; ++i) {
    c = detail::rk4_step_controlled(field, c, h, opt.step_error_cap, opt.max_halvings);
    if (!c.allFinite())
      throw IntegrationFailure("integrate: non-finite state at t=" +
                               std::to_string(i * h));
    if (sys.family == Family::PSL2R && opt.renormalize_every > 0 &&
        i % opt.renormalize_every == 0) {
      out.projection_residual = std::max(out.projection_residual, renormalize_psl2(c));
    }
    out.times.push_back(i * h);
    out.states.push_back(unpack_state(sys, c));
  }
  return out;
}

TangentFrame tangent_flow(const PhaseState& s, double t_max, double dt,
                          const MagneticSystem& sys) {
  const int m = sys.ambient_dim();
  TangentFrame out;
  out.base_start = s;
  if (t_max == 0.0) {
    out.base_end = s;
    out.frame = Mat::Identity(m, m);
    return out;
  }
  if (!(dt > 0.0)) throw PreconditionFailed("tangent_flow: need dt > 0");

  // Augmented system: state followed by the m x m frame, column major.
  const auto field = [&sys, m](const Vec& a) {
    Vec out_a(a.size());
    Vec c = a.head(m);
    out_a.head(m) = ambient_field(sys, c);
    Mat df = ambient_jacobian(sys, c);
    Eigen::Map<const Mat> frame(a.data() + m, m, m);
    Eigen::Map<Mat>(out_a.data() + m, m, m) = df * frame;
    return out_a;
  };

  Vec a(m + m * m);
  a.head(m) = pack_state(sys, s);
  Eigen::Map<Mat>(a.data() + m, m, m) = Mat::Identity(m, m);
  const long n = std::max<long>(std::lround(t_max / dt), 1);
  const double h = t_max / static_cast<double>(n);
  for (long i = 0; i < n; ++i) {
    a = detail::rk4_step(field, a, h);
    if (!a.allFinite())
      throw IntegrationFailure("tangent_flow: non-finite frame at t=" +
                               std::to_string((i + 1) * h));
  }
  out.base_end = unpack_state(sys, a.head(m));
  out.frame = Eigen::Map<Mat>(a.data() + m, m, m);
  return out;
}

double casimir(const PhaseState& s, const MagneticSystem& sys) {
  switch (sys.family) {
    case Family::Heisenberg:
    case Family::PSL2R:
      return s.p[2];
    case Family::Sol:
      return s.p[2] + s.p[0] * s.p[1];
    case Family::TorusN:
      return 0.0;
    case Family::Nil4:
      return 0.0;
  }
  return 0.0;
}

InvariantReport invariant_report(const Trajectory& traj, const MagneticSystem& sys,
                                 const std::vector<OneFormId>& forms) {
  if (traj.states.empty())
    throw PreconditionFailed("invariant_report: empty trajectory");
  InvariantReport r;
  const double h0 = hamiltonian(traj.states.front().p, sys);
  const double c0 = casimir(traj.states.front(), sys);
  std::map<std::string, double> mins;
  for (const auto& s : traj.states) {
    r.energy_drift = std::max(r.energy_drift, std::abs(hamiltonian(s.p, sys) - h0));
    r.casimir_drift = std::max(r.casimir_drift, std::abs(casimir(s, sys) - c0));
    for (OneFormId f : forms) {
      const double v = form_pairing(f, s, sys);
      auto it = mins.find(form_name(f));
      if (it == mins.end() || v < it->second) mins[form_name(f)] = v;
    }
  }
  r.energy_drift_rel = h0 != 0.0 ? r.energy_drift / std::abs(h0) : r.energy_drift;
  r.casimir_drift_rel = c0 != 0.0 ? r.casimir_drift / std::abs(c0) : r.casimir_drift;
  r.min_form_pairings = std::move(mins);
  return r;
}

}  // namespace magshell
