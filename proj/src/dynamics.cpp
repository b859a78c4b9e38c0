#include "magshell/dynamics.hpp"

#include <cmath>

#include "magshell/errors.hpp"

namespace magshell {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Pairing of the omega-primitive with X_H at a state:
//   torus       p dq + tau*beta   ->  2H + beta(X_H)
//   Heis/PSL2   nu + tau*gamma    ->  2H + p_gamma   (computed honestly)
//   Sol         nu - tau*(y0 dy1) ->  2H - y0 * dy1(X_H)
double primitive_pairing(const PhaseState& s, const MagneticSystem& sys) {
  PhaseVelocity v = vector_field(s, sys);
  const double twoH = 2.0 * hamiltonian(s.p, sys);
  switch (sys.family) {
    case Family::TorusN:
      return twoH + form_value(OneFormId::BetaTorus, sys, s, v.chart_vel, v.p_vel);
    case Family::Heisenberg:
    case Family::PSL2R:
      return form_value(OneFormId::Psi, sys, s, v.chart_vel, v.p_vel);
    case Family::Sol: {
      Vec ch = chart_of(s.q);
      return twoH - ch[0] * v.chart_vel[1];
    }
    case Family::Nil4: break;
  }
  throw UnsupportedSystem("omega primitive: nil4");
}

// Lifted configuration coordinates for closure checks; PSL2 theta is
// unwrapped continuously along the sample sequence.
std::vector<Vec> lifted_charts(const Trajectory& traj, const MagneticSystem& sys) {
  std::vector<Vec> out;
  out.reserve(traj.states.size());
  double offset = 0.0;
  for (size_t i = 0; i < traj.states.size(); ++i) {
    Vec c = chart_of(traj.states[i].q);
    if (sys.family == Family::PSL2R && i > 0) {
      double prev = out.back()[2];
      double th = c[2] + offset;
      while (th - prev > kPi) {
        th -= 2.0 * kPi;
        offset -= 2.0 * kPi;
      }
      while (th - prev < -kPi) {
        th += 2.0 * kPi;
        offset += 2.0 * kPi;
      }
      c[2] = th;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace

Trajectory sample_orbit(const PhaseState& s, double T, int n,
                        const MagneticSystem& sys) {
  Trajectory traj;
  traj.dt = T / n;
  traj.times.reserve(n + 1);
  traj.states.reserve(n + 1);
  if (sys.family == Family::Sol || sys.family == Family::Nil4) {
    return integrate(s, T, T / n, sys);
  }
  traj.method = "closed-form";
  for (int i = 0; i <= n; ++i) {
    const double t = T * i / n;
    traj.times.push_back(t);
    traj.states.push_back(closed_form_flow(s, t, sys));
  }
  return traj;
}

double omega_energy(const Trajectory& traj, const MagneticSystem& sys) {
  if (traj.states.size() < 2)
    throw PreconditionFailed("omega_energy: need a sampled loop");
  std::vector<Vec> charts = lifted_charts(traj, sys);
  double gap = (charts.front() - charts.back()).cwiseAbs().maxCoeff();
  gap = std::max(gap, (traj.states.front().p - traj.states.back().p)
                          .cwiseAbs()
                          .maxCoeff());
  if (gap > 1e-6)
    throw PreconditionFailed("omega_energy: loop not closed in the cover (gap " +
                             std::to_string(gap) + ")");
  double total = 0.0;
  for (size_t i = 0; i + 1 < traj.states.size(); ++i) {
    const double f0 = primitive_pairing(traj.states[i], sys);
    const double f1 = primitive_pairing(traj.states[i + 1], sys);
    total += 0.5 * (f0 + f1) * (traj.times[i + 1] - traj.times[i]);
  }
  return total;
}

PhaseState ClosedOrbitRecord::representative(const MagneticSystem& sys) const {
  Vec p(sys.dim);
  if (sys.family == Family::TorusN) {
    p = Vec::Zero(sys.dim);
    // First rotation block of J in Schur coordinates carrying this family.
    for (int i = 0; i + 1 < sys.dim; ++i) {
      if (sys.block_omega[i] == mu) {
        Vec w = Vec::Zero(sys.dim);
        w[i] = std::sqrt(2.0 * k);
        p = sys.schur_u * w;
        break;
      }
    }
  } else {
    p << A, 0.0, C;
  }
  PhaseState s;
  s.q = identity_element(sys);
  s.p = p;
  return s;
}

namespace {

ClosedOrbitRecord verify_record(ClosedOrbitRecord rec, const MagneticSystem& sys) {
  PhaseState s0 = rec.representative(sys);
  PhaseState s1 = closed_form_flow(s0, rec.T, sys);
  rec.return_distance = state_distance(s0, s1);
  Trajectory loop = sample_orbit(s0, rec.T, 2048 * rec.l, sys);
  std::vector<Vec> charts = lifted_charts(loop, sys);
  rec.loop_gap = (charts.front() - charts.back()).cwiseAbs().maxCoeff();
  rec.omega = omega_energy(loop, sys);
  if (rec.return_distance > 1e-8 || rec.loop_gap > 1e-6)
    throw Error("orbit verification failed: return " +
                std::to_string(rec.return_distance) + ", gap " +
                std::to_string(rec.loop_gap));
  return rec;
}

}  // namespace

std::vector<ClosedOrbitRecord> contractible_orbits(const MagneticSystem& sys,
                                                   double k, int l_max) {
  if (!(k > 0.0)) throw PreconditionFailed("contractible_orbits: need k > 0");
  std::vector<ClosedOrbitRecord> out;
  switch (sys.family) {
    case Family::TorusN: {
      // Orbits need p in the kernel of P1 with e^{TJ} p = p: one family per
      // rotation block of J.
      for (int i = 0; i + 1 < sys.dim; ++i) {
        const double w = sys.block_omega[i];
        if (w <= 0.0) continue;  // visit each block once, via its positive rate
        for (int l = 1; l <= l_max; ++l) {
          ClosedOrbitRecord rec;
          rec.system = sys.family;
          rec.k = k;
          rec.C = 0.0;
          rec.A = std::sqrt(2.0 * k);
          rec.mu = w;
          rec.l = l;
          rec.T = 2.0 * kPi * l / w;
          out.push_back(verify_record(rec, sys));
        }
      }
      return out;
    }
    case Family::Heisenberg: {
      if (k >= 0.5) return out;  // includes the excluded p_gamma = -1 circle
      const double pg = std::sqrt(1.0 - 2.0 * k) - 1.0;
      const double mu = 1.0 + pg;
      for (int l = 1; l <= l_max; ++l) {
        ClosedOrbitRecord rec;
        rec.system = sys.family;
        rec.k = k;
        rec.C = pg;
        rec.A = std::sqrt(2.0 * k - pg * pg);
        rec.mu = mu;
        rec.l = l;
        rec.T = 2.0 * kPi * l / mu;
        out.push_back(verify_record(rec, sys));
      }
      return out;
    }
    case Family::PSL2R: {
      if (k >= 0.25) return out;
      const double root = std::sqrt(1.0 - 4.0 * k);
      const double C = 0.5 * (-1.0 + root);  // the side-of-cone compatible root
      const double mu = -root;
      // Contractibility: the composite winding -m sign(1+C) - l sign(mu)
      // must vanish; with m = l this needs sign(1+C) = -sign(mu).
      if (!((1.0 + C > 0.0) == (mu < 0.0)))
        throw Error("psl2 orbit root fails the cone-side test");
      for (int l = 1; l <= l_max; ++l) {
        ClosedOrbitRecord rec;
        rec.system = sys.family;
        rec.k = k;
        rec.C = C;
        rec.A = std::sqrt(2.0 * k - C * C);
        rec.mu = mu;
        rec.l = l;
        rec.T = 2.0 * kPi * l / std::abs(mu);
        rec.homotopy_m = l;
        rec.homotopy_l = l;
        out.push_back(verify_record(rec, sys));
      }
      return out;
    }
    case Family::Sol:
      return out;  // no closed-form family; detector stays silent
    case Family::Nil4:
      return out;
  }
  return out;
}

std::string orbit_type_name(OrbitType t) {
  switch (t) {
    case OrbitType::Elliptic: return "elliptic";
    case OrbitType::Parabolic: return "parabolic";
    case OrbitType::Hyperbolic: return "hyperbolic";
  }
  return "?";
}

OrbitType classify_psl2(double C, double A) {
  if (A < 0.0) throw PreconditionFailed("classify_psl2: need A >= 0");
  const double e = (1.0 + C) * (1.0 + C) - A * A;
  if (std::abs(e) < 1e-12) return OrbitType::Parabolic;
  return e > 0.0 ? OrbitType::Elliptic : OrbitType::Hyperbolic;
}

LyapunovResult lyapunov_exponent(const MagneticSystem& sys, const PhaseState& s,
                                 double t_max, double dt) {
  if (!(t_max > 0.0) || !(dt > 0.0))
    throw PreconditionFailed("lyapunov_exponent: need t_max, dt > 0");
  const int m = sys.ambient_dim();
  const auto field = [&sys, m](const Vec& a) {
    Vec out(2 * m);
    Vec c = a.head(m);
    out.head(m) = ambient_field(sys, c);
    out.tail(m) = ambient_jacobian(sys, c) * a.tail(m);
    return out;
  };

  Vec a(2 * m);
  a.head(m) = pack_state(sys, s);
  Vec xi = ambient_field(sys, a.head(m));
  if (xi.norm() == 0.0) xi = Vec::Ones(m);
  a.tail(m) = xi / xi.norm();

  const double renorm_interval = 1.0;
  const long steps_per_renorm = std::max<long>(std::lround(renorm_interval / dt), 1);
  const long n = std::max<long>(std::lround(t_max / dt), 1);
  double accum = 0.0;
  std::vector<double> ts, S;
  ts.push_back(0.0);
  S.push_back(0.0);
  for (long i = 1; i <= n; ++i) {
    a = detail::rk4_step(field, a, dt);
    if (!a.allFinite())
      throw IntegrationFailure("lyapunov_exponent: non-finite tangent");
    if (i % steps_per_renorm == 0 || i == n) {
      const double nrm = a.tail(m).norm();
      accum += std::log(nrm);
      a.tail(m) /= nrm;
      ts.push_back(i * dt);
      S.push_back(accum);
    }
  }

  auto slope = [&](size_t lo, size_t hi) {
    double st = 0, ss = 0, stt = 0, sts = 0;
    const double cnt = static_cast<double>(hi - lo);
    for (size_t i = lo; i < hi; ++i) {
      st += ts[i];
      ss += S[i];
      stt += ts[i] * ts[i];
      sts += ts[i] * S[i];
    }
    const double det = cnt * stt - st * st;
    return det != 0.0 ? (cnt * sts - st * ss) / det : 0.0;
  };

  LyapunovResult r;
  r.t_max = t_max;
  const size_t nrec = ts.size();
  r.exponent = slope(nrec / 2, nrec);
  const double s34 = slope(nrec / 2, 3 * nrec / 4);
  const double s44 = slope(3 * nrec / 4, nrec);
  r.confidence = std::abs(s34 - s44);
  r.converged = r.confidence < 2e-2;
  return r;
}

double entropy_margin(double k) {
  const double b = std::sqrt(2.0 * k);
  auto g = [&](double c) { return 2.0 * c * c + 2.0 * c + 1.0 - 2.0 * k; };
  double m = std::min(g(-b), g(b));
  if (-b <= -0.5 && -0.5 <= b) m = std::min(m, g(-0.5));
  // Grid scan backs up the analytic candidates.
  for (int i = 0; i <= 1000; ++i) m = std::min(m, g(-b + 2.0 * b * i / 1000));
  return m;
}

bool entropy_threshold(double k) {
  if (!(k > 0.0)) throw PreconditionFailed("entropy_threshold: need k > 0");
  return entropy_margin(k) >= 0.0;
}

namespace {

DisplacementCertificate run_probe(const MagneticSystem& sys, const Vec& a,
                                  const PhaseState& start, int watch_index,
                                  double shell_bound, double t_bound,
                                  const std::string& name, double coeff) {
  DisplacementCertificate cert;
  cert.probe = name;
  cert.growth_coefficient = coeff;
  cert.exit_time_bound = t_bound;
  cert.shell_bound = shell_bound;
  const auto field = [&](const Vec& c) { return ambient_linear_field(sys, a, c); };
  Vec c = pack_state(sys, start);
  const double dt = 1e-3;
  const double horizon = 2.0 * t_bound + 1.0;
  const int off = (sys.family == Family::PSL2R) ? 4 : sys.dim;
  double t = 0.0;
  while (t < horizon) {
    c = detail::rk4_step(field, c, dt);
    t += dt;
    if (c[off + watch_index] > shell_bound) {
      cert.simulated_exit_time = t;
      return cert;
    }
  }
  throw Error("displacement probe failed to exit within 2x the bound");
}

}  // namespace

DisplacementCertificate displacement_probe(const MagneticSystem& sys, double k) {
  if (!(k > 0.0)) throw PreconditionFailed("displacement_probe: need k > 0");
  const double b = std::sqrt(2.0 * k);
  switch (sys.family) {
    case Family::Heisenberg: {
      if (k >= 0.5)
        throw PreconditionFailed("heisenberg displacement needs k < 1/2");
      // p_beta grows at rate 1 + p_gamma >= 1 - sqrt(2k); the slowest shell
      // start maximizes (b - p_beta0)/(1 + p_gamma) over the sphere.
      double worst_t = 0.0, worst_pg = 0.0;
      for (int i = 0; i <= 4096; ++i) {
        const double pg = -b + 2.0 * b * i / 4096.0;
        const double pb0 = -std::sqrt(std::max(2.0 * k - pg * pg, 0.0));
        const double tt = (b - pb0) / (1.0 + pg);
        if (tt > worst_t) {
          worst_t = tt;
          worst_pg = pg;
        }
      }
      Vec p(3);
      p << 0.0, -std::sqrt(std::max(2.0 * k - worst_pg * worst_pg, 0.0)), worst_pg;
      Vec a(3);
      a << 1.0, 0.0, 0.0;
      PhaseState s{identity_element(sys), p};
      return run_probe(sys, a, s, 1, b, 2.0 * b / (1.0 - b), "f = p_alpha",
                       1.0 - b);
    }
    case Family::PSL2R: {
      if (k >= 0.25) throw PreconditionFailed("psl2 displacement needs k < 1/4");
      const double coeff = 1.0 - 2.0 * std::sqrt(k);
      Vec p(3);
      p << -std::sqrt(k), 0.0, -std::sqrt(k);
      Vec a(3);
      a << 0.0, 1.0, 0.0;
      PhaseState s{identity_element(sys), p};
      const double t_bound = std::log((2.0 * b + 1.0) / coeff);
      return run_probe(sys, a, s, 0, b, t_bound, "f = p_beta", coeff);
    }
    case Family::TorusN: {
      // h = <a, p> with Ja != 0 translates p at rate Ja.
      int best = 0;
      double rate = 0.0;
      for (int i = 0; i < sys.dim; ++i) {
        const double r = sys.J.col(i).norm();
        if (r > rate) {
          rate = r;
          best = i;
        }
      }
      if (rate == 0.0) throw PreconditionFailed("torus displacement needs sigma != 0");
      Vec a = Vec::Zero(sys.dim);
      a[best] = 1.0;
      Vec dir = sys.J * a / rate;
      PhaseState s{identity_element(sys), Vec(-b * dir)};
      // watch <p, dir>: rotate coordinates so that it is the first momentum
      // coordinate; simplest is to run the probe manually here.
      DisplacementCertificate cert;
      cert.probe = "h = <e_" + std::to_string(best) + ", p>";
      cert.growth_coefficient = rate;
      cert.exit_time_bound = 2.0 * b / rate;
      cert.shell_bound = b;
      const auto field = [&](const Vec& c) { return ambient_linear_field(sys, a, c); };
      Vec c = pack_state(sys, s);
      const double dt = 1e-3;
      double t = 0.0;
      while (t < 2.0 * cert.exit_time_bound + 1.0) {
        c = detail::rk4_step(field, c, dt);
        t += dt;
        if (c.tail(sys.dim).dot(dir) > b) {
          cert.simulated_exit_time = t;
          return cert;
        }
      }
      throw Error("torus displacement probe failed to exit");
    }
    case Family::Sol:
    case Family::Nil4:
      throw PreconditionFailed("displacement_probe: unsupported for " +
                               family_name(sys.family));
  }
  throw UnsupportedSystem("displacement_probe");
}

}  // namespace magshell
