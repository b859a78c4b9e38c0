#include "magshell/stability.hpp"

#include <cmath>
#include <random>

#include "magshell/errors.hpp"

namespace magshell {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Antiderivatives of the bump q(s) = (1 - (s/w)^2)^3 on |s| <= w.
// Q0 is odd with Q0(+-w) = +-(16/35) w; Q1(x) = int_0^x s q(s) ds is even
// with plateau w^2/8 outside the support.
double bump_q(double x, double w) {
  const double u = x / w;
  if (std::abs(u) >= 1.0) return 0.0;
  const double a = 1.0 - u * u;
  return a * a * a;
}
double bump_Q0(double x, double w) {
  const double u = std::clamp(x / w, -1.0, 1.0);
  const double u2 = u * u;
  return w * u * (1.0 - u2 + 0.6 * u2 * u2 - u2 * u2 * u2 / 7.0);
}
double bump_Q1(double x, double w) {
  const double u = std::clamp(std::abs(x) / w, 0.0, 1.0);
  const double u2 = u * u;
  return w * w * u2 * (0.5 - 0.75 * u2 + 0.5 * u2 * u2 - 0.125 * u2 * u2 * u2);
}
constexpr double kBumpMass1Coeff = 0.125;  // Q1 plateau = w^2/8

double psi_pairing_at(double twoH, double pg) { return twoH + pg; }
double phi_pairing_at(double t_coef, double pg) { return 1.0 + t_coef * pg; }

}  // namespace

double StabilizingFormRecipe::f(double pg) const {
  switch (kind) {
    case RecipeKind::PsiOnly: return 1.0;
    case RecipeKind::BumpProfiles: {
      const double x = pg + 2.0 * k;
      return sign * ((1.0 - 2.0 * k * t_coef) * bump_Q0(x, width) +
                     t_coef * bump_Q1(x, width));
    }
    default: return 0.0;
  }
}

double StabilizingFormRecipe::fprime(double pg) const {
  if (kind != RecipeKind::BumpProfiles) return 0.0;
  return sign * (1.0 + t_coef * pg) * bump_q(pg + 2.0 * k, width);
}

double StabilizingFormRecipe::g(double pg) const {
  if (kind != RecipeKind::BumpProfiles) return 0.0;
  const double m1 = kBumpMass1Coeff * width * width;
  return sign * (m1 - bump_Q1(pg + 2.0 * k, width));
}

double StabilizingFormRecipe::gprime(double pg) const {
  if (kind != RecipeKind::BumpProfiles) return 0.0;
  const double x = pg + 2.0 * k;
  return -sign * x * bump_q(x, width);
}

StabilizingFormRecipe build_profiles(const MagneticSystem& sys, double k) {
  if (!(k > 0.0)) throw PreconditionFailed("build_profiles: need k > 0");
  StabilizingFormRecipe r;
  r.system = sys.family;
  r.k = k;
  switch (sys.family) {
    case Family::TorusN:
      r.kind = RecipeKind::TorusClosedForm;
      return r;
    case Family::Sol:
      r.kind = RecipeKind::SolClosedForm;
      return r;
    case Family::Heisenberg:
      if (std::abs(k - 0.5) < 1e-12)
        throw NotStable("Sigma_{1/2} on the Heisenberg quotient is not stable");
      r.t_coef = 1.0;
      break;
    case Family::PSL2R:
      if (std::abs(k - 0.25) < 1e-12 || std::abs(k - 0.5) < 1e-12)
        throw NotStable("PSL2 Sigma_k is not stable at k = 1/4 and k = 1/2");
      r.t_coef = 2.0;
      break;
    case Family::Nil4:
      throw UnsupportedSystem("build_profiles: nil4");
  }

  if (k > 0.5) {
    r.kind = RecipeKind::PsiOnly;  // contact range, psi itself stabilizes
    return r;
  }

  r.kind = RecipeKind::BumpProfiles;
  const double b = std::sqrt(2.0 * k);
  const double excluded = 1.0 / r.t_coef;  // 1 + t_coef * pg vanishes at -excluded
  r.sign = (1.0 - 2.0 * k * r.t_coef) > 0.0 ? 1.0 : -1.0;
  r.width = std::min({0.1 * b, 0.5 * (b - 2.0 * k), 0.5 * std::abs(excluded - 2.0 * k)});
  if (!(r.width > 0.0)) throw NotStable("bump construction degenerates at this k");

  // Balancing integral of (2k + t)/(1 + t_coef t) r(t); vanishes for the even
  // bump, checked by quadrature.
  const int nq = 40001;
  double total = 0.0;
  for (int i = 0; i < nq; ++i) {
    const double t = -2.0 * k - r.width + 2.0 * r.width * i / (nq - 1);
    const double w8 = (i == 0 || i == nq - 1) ? 0.5 : 1.0;
    total += w8 * (2.0 * k + t) * r.sign * bump_q(t + 2.0 * k, r.width);
  }
  r.balance_residual = std::abs(total * 2.0 * r.width / (nq - 1));
  if (r.balance_residual > 1e-10)
    throw Error("bump balancing integral failed the 1e-10 gate");

  r.grid.resize(r.n_samples);
  r.f_samples.resize(r.n_samples);
  r.fp_samples.resize(r.n_samples);
  r.g_samples.resize(r.n_samples);
  r.gp_samples.resize(r.n_samples);
  for (int i = 0; i < r.n_samples; ++i) {
    const double pg = -b + 2.0 * b * i / (r.n_samples - 1);
    r.grid[i] = pg;
    r.f_samples[i] = r.f(pg);
    r.fp_samples[i] = r.fprime(pg);
    r.g_samples[i] = r.g(pg);
    r.gp_samples[i] = r.gprime(pg);
  }
  return r;
}

double lambda_value(const StabilizingFormRecipe& r, const MagneticSystem& sys,
                    const PhaseState& s, const Vec& chart_vel, const Vec& p_vel) {
  switch (r.kind) {
    case RecipeKind::TorusClosedForm:
      return form_value(OneFormId::LambdaTorus, sys, s, chart_vel, p_vel);
    case RecipeKind::SolClosedForm:
      return form_value(OneFormId::LambdaSol, sys, s, chart_vel, p_vel);
    case RecipeKind::PsiOnly:
      return form_value(OneFormId::Psi, sys, s, chart_vel, p_vel);
    case RecipeKind::BumpProfiles: {
      const double pg = s.p[2];
      double v = r.f(pg) * form_value(OneFormId::Psi, sys, s, chart_vel, p_vel);
      const double gv = r.g(pg);
      if (gv != 0.0) {
        const OneFormId phi = sys.family == Family::Heisenberg ? OneFormId::PhiHeis
                                                               : OneFormId::PhiPsl2;
        v += gv * form_value(phi, sys, s, chart_vel, p_vel);
      }
      return v;
    }
  }
  throw Error("lambda_value: bad recipe");
}

double lambda_pairing(const StabilizingFormRecipe& r, const MagneticSystem& sys,
                      const PhaseState& s) {
  PhaseVelocity v = vector_field(s, sys);
  return lambda_value(r, sys, s, v.chart_vel, v.p_vel);
}

double lambda_contraction_residual(const StabilizingFormRecipe& r,
                                   const MagneticSystem& sys, const PhaseState& s,
                                   const Vec& w_chart, const Vec& w_p) {
  // i_{X_H} d lambda = -[f'(pg) psi(X_H) + g'(pg) phi(X_H)] dp_gamma
  //                    - f(pg) dH     (and plain -dH for the closed forms),
  // using d psi = omega, d phi = 0 and dp_gamma(X_H) = 0.
  const double dH = s.p.dot(sys.metric * w_p);
  switch (r.kind) {
    case RecipeKind::TorusClosedForm:
    case RecipeKind::SolClosedForm:
      return -dH;
    case RecipeKind::PsiOnly:
      return -dH;
    case RecipeKind::BumpProfiles: {
      const double pg = s.p[2];
      const double twoH = 2.0 * hamiltonian(s.p, sys);
      const double ode = r.fprime(pg) * psi_pairing_at(twoH, pg) +
                         r.gprime(pg) * phi_pairing_at(r.t_coef, pg);
      return -ode * w_p[2] - r.f(pg) * dH;
    }
  }
  throw Error("lambda_contraction_residual: bad recipe");
}

namespace {

struct ComboTerm {
  double coeff;
  const StabilizingFormRecipe* recipe;
};

VerifyReport verify_impl(const std::vector<ComboTerm>& combo,
                         const MagneticSystem& sys, int grid,
                         int tangents_per_point, uint64_t seed) {
  if (combo.empty()) throw PreconditionFailed("verify: empty combination");
  const double k = combo.front().recipe->k;
  const int n = sys.dim;
  const int cdim = (sys.family == Family::TorusN) ? sys.dim : 3;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  VerifyReport rep;
  rep.min_pairing = std::numeric_limits<double>::infinity();
  rep.worst_pairing_momentum = Vec::Zero(n);
  rep.worst_residual_momentum = Vec::Zero(n);

  std::vector<Vec> charts;
  charts.push_back(Vec::Zero(cdim));
  if (sys.family == Family::PSL2R) {
    charts.back() << 0.0, 1.0, 0.5 * kPi;
    Vec c2(3);
    c2 << 0.3, 1.7, 1.1;
    charts.push_back(c2);
  } else {
    Vec c2 = Vec::Zero(cdim);
    for (int i = 0; i < cdim; ++i) c2[i] = 0.1 * (i + 1);
    charts.push_back(c2);
  }

  auto momenta_on_shell = [&](int i, int j) {
    Vec p(n);
    if (sys.family == Family::TorusN) {
      // direction grid on the sphere |p|^2 = 2k
      p = Vec::Zero(n);
      const double a = 2.0 * kPi * i / grid;
      p[0] = std::sqrt(2.0 * k) * std::cos(a);
      p[1] = std::sqrt(2.0 * k) * std::sin(a);
      return p;
    }
    const double b = std::sqrt(2.0 * k);
    const double pg = -b + 2.0 * b * i / (grid - 1);
    const double a2 = std::max(2.0 * k - pg * pg, 0.0);
    const double ang = 2.0 * kPi * j / 4.0;
    p << std::sqrt(a2) * std::cos(ang), std::sqrt(a2) * std::sin(ang), pg;
    return p;
  };

  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < 4; ++j) {
      Vec p = momenta_on_shell(i, j);
      for (const Vec& ch : charts) {
        PhaseState s = make_state(sys, ch, p);
        double pair = 0.0;
        for (const auto& term : combo)
          pair += term.coeff * lambda_pairing(*term.recipe, sys, s);
        if (pair < rep.min_pairing) {
          rep.min_pairing = pair;
          rep.worst_pairing_momentum = p;
        }
        for (int t = 0; t < tangents_per_point; ++t) {
          Vec wc(cdim), wp(n);
          for (int m = 0; m < cdim; ++m) wc[m] = gauss(rng);
          for (int m = 0; m < n; ++m) wp[m] = gauss(rng);
          // project onto the shell tangent space: dH(w) = p^T G wp = 0
          Vec gp = sys.metric * p;
          wp -= gp * (gp.dot(wp) / gp.squaredNorm());
          double res = 0.0;
          for (const auto& term : combo)
            res += term.coeff *
                   lambda_contraction_residual(*term.recipe, sys, s, wc, wp);
          if (std::abs(res) > rep.max_residual) {
            rep.max_residual = std::abs(res);
            rep.worst_residual_momentum = p;
          }
        }
      }
    }
  }
  return rep;
}

}  // namespace

VerifyReport verify_stabilizing(const StabilizingFormRecipe& recipe,
                                const MagneticSystem& sys, int grid,
                                int tangents_per_point, uint64_t seed) {
  if (recipe.system != sys.family)
    throw PreconditionFailed("verify_stabilizing: recipe/system mismatch");
  return verify_impl({{1.0, &recipe}}, sys, grid, tangents_per_point, seed);
}

VerifyReport verify_stabilizing_combination(
    const std::vector<std::pair<double, const StabilizingFormRecipe*>>& combo,
    const MagneticSystem& sys, int grid, int tangents_per_point, uint64_t seed) {
  std::vector<ComboTerm> terms;
  for (const auto& [c, r] : combo) {
    if (!(c > 0.0)) throw PreconditionFailed("cone combination needs positive weights");
    terms.push_back({c, r});
  }
  return verify_impl(terms, sys, grid, tangents_per_point, seed);
}

std::string verdict_name(ContactVerdict v) {
  switch (v) {
    case ContactVerdict::Contact: return "contact";
    case ContactVerdict::NotContact: return "not-contact";
    case ContactVerdict::Boundary: return "boundary";
  }
  return "?";
}

ContactDiagnosis contact_diagnostic(const MagneticSystem& sys, double k) {
  if (sys.family != Family::Heisenberg && sys.family != Family::PSL2R)
    throw UnsupportedSystem("contact_diagnostic covers Heisenberg and PSL2");
  if (!(k > 0.0)) throw PreconditionFailed("contact_diagnostic: need k > 0");
  ContactDiagnosis d;
  const double b = std::sqrt(2.0 * k);

  // min of psi(X_H) = 2H + p_gamma over the shell, via honest pairings on a
  // p_gamma grid including the endpoints.
  double margin = std::numeric_limits<double>::infinity();
  const int grid = 129;
  for (int i = 0; i < grid; ++i) {
    const double pg = -b + 2.0 * b * i / (grid - 1);
    const double a2 = std::max(2.0 * k - pg * pg, 0.0);
    Vec p(3);
    p << std::sqrt(a2), 0.0, pg;
    PhaseState s{identity_element(sys), p};
    margin = std::min(margin, form_pairing(OneFormId::Psi, s, sys));
  }
  d.margin = margin;
  d.liouville_pairing = 2.0 * k;

  // Distinguished null-homologous orbits p_alpha = p_beta = 0,
  // p_gamma = -+ sqrt(2k); their closing period on the compact quotient.
  d.orbit_period = (sys.family == Family::Heisenberg) ? 1.0 / b : 2.0 * kPi / b;
  for (int sgn : {-1, +1}) {
    Vec p(3);
    p << 0.0, 0.0, sgn * b;
    PhaseState s{identity_element(sys), p};
    Trajectory traj = integrate(s, d.orbit_period, 1e-3, sys);
    double total = 0.0;
    for (size_t i = 0; i + 1 < traj.states.size(); ++i) {
      const double f0 = form_pairing(OneFormId::Psi, traj.states[i], sys);
      const double f1 = form_pairing(OneFormId::Psi, traj.states[i + 1], sys);
      total += 0.5 * (f0 + f1) * (traj.times[i + 1] - traj.times[i]);
    }
    if (sgn < 0)
      d.orbit_integral_minus = total;
    else
      d.orbit_integral_plus = total;
  }

  if (margin > 1e-9)
    d.verdict = ContactVerdict::Contact;
  else if (margin < -1e-9)
    d.verdict = ContactVerdict::NotContact;
  else
    d.verdict = ContactVerdict::Boundary;
  return d;
}

VirtualContactBound virtual_contact_bound(const MagneticSystem& sys, double k,
                                          int n_trajectories, double t_max,
                                          double dt, uint64_t seed) {
  if (sys.family != Family::PSL2R)
    throw UnsupportedSystem("virtual_contact_bound is the PSL2 certificate");
  if (!(k > 0.25))
    throw PreconditionFailed(
        "virtual contact needs k above the Mane value 1/4 (epsilon > 0)");
  VirtualContactBound out;
  out.epsilon = std::sqrt(2.0 * k) - std::sqrt(0.5);
  out.epsilon_sq = out.epsilon * out.epsilon;
  out.sup_norm_bound = std::sqrt(2.0 * k) + std::sqrt(0.5);
  out.sampled_min = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < n_trajectories; ++trial) {
    Vec p(3);
    for (int i = 0; i < 3; ++i) p[i] = gauss(rng);
    p *= std::sqrt(2.0 * k) / p.norm();
    Vec ch(3);
    ch << gauss(rng), std::exp(0.5 * gauss(rng)), gauss(rng);
    PhaseState s = make_state(sys, ch, p);
    Trajectory traj = integrate(s, t_max, dt, sys);
    for (const auto& st : traj.states) {
      PhaseVelocity v = vector_field(st, sys);
      const double pairing =
          2.0 * hamiltonian(st.p, sys) +
          form_value(OneFormId::DeltaPsl2, sys, st, v.chart_vel, v.p_vel);
      out.sampled_min = std::min(out.sampled_min, pairing);
    }
  }
  return out;
}

double tame_ratio(const StabilizingFormRecipe& recipe, const MagneticSystem& sys,
                  const ClosedOrbitRecord& rec, int base_samples) {
  PhaseState s0 = rec.representative(sys);
  Trajectory loop = sample_orbit(s0, rec.T, base_samples * rec.l, sys);
  double lam_period = 0.0;
  for (size_t i = 0; i + 1 < loop.states.size(); ++i) {
    const double f0 = lambda_pairing(recipe, sys, loop.states[i]);
    const double f1 = lambda_pairing(recipe, sys, loop.states[i + 1]);
    lam_period += 0.5 * (f0 + f1) * (loop.times[i + 1] - loop.times[i]);
  }
  return lam_period / std::abs(rec.omega);
}

double nil4_contact_pairing(const Vec& mu) {
  if (mu.size() != 4) throw DimensionMismatch("nil4_contact_pairing: need dim 4");
  MagneticSystem sys = make_nil4();
  Vec e = euler_field(mu, sys);
  const double x1 = mu[0], x2 = mu[1], x3 = mu[2], x4 = mu[3];
  // theta = (x1 dx3 - x3 dx1 + x2 dx4 - x4 dx2)/2 - x3^2 dx4 / 2,
  // phi = theta + d(x2 x4)/2.
  const double theta = 0.5 * (x1 * e[2] - x3 * e[0] + x2 * e[3] - x4 * e[1]) -
                       0.5 * x3 * x3 * e[3];
  const double dx2x4 = 0.5 * (x4 * e[1] + x2 * e[3]);
  return theta + dx2x4;
}

}  // namespace magshell
