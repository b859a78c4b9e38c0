#include "magshell/mane.hpp"

#include <cmath>

#include "magshell/errors.hpp"
#include "magshell/stability.hpp"

namespace magshell {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Canonical chart coefficients of the configuration 1-form at q.
Vec form_covector(const MagneticSystem& sys, OneFormId form, const Vec& q) {
  switch (form) {
    case OneFormId::Gamma: {
      Vec p(3);
      if (sys.family == Family::Heisenberg)
        p << 0.0, -q[0], 1.0;  // dz - x dy
      else
        p << 1.0 / q[1], 0.0, 1.0;  // dx/y + dtheta
      return p;
    }
    case OneFormId::DeltaPsl2: {
      Vec p(3);
      p << 1.0 / q[1], 0.0, 0.5;
      return p;
    }
    case OneFormId::BetaTorus:
      return Vec(-0.5 * (sys.J * q));
    case OneFormId::Zero:
      return Vec::Zero(sys.config_dim());
    default:
      throw InvalidForm("not a configuration primitive: " + form_name(form));
  }
}

double energy_of_form_at(const MagneticSystem& sys, OneFormId form, const Vec& q) {
  Vec pf = frame_from_canonical(sys, q, form_covector(sys, form, q));
  return hamiltonian(pf, sys);
}

// Grid supremum of H(q, theta_q) over boxes of growing size; detects
// unbounded primitives by comparing box levels.
double grid_sup(const MagneticSystem& sys, OneFormId form) {
  const int d = sys.config_dim();
  double sup_small = 0.0, sup_large = 0.0;
  for (int level = 0; level < 2; ++level) {
    const double L = level == 0 ? 1.0 : 4.0;
    double sup = 0.0;
    const int g = 9;
    std::vector<int> idx(d, 0);
    while (true) {
      Vec q(d);
      for (int i = 0; i < d; ++i) q[i] = -L + 2.0 * L * idx[i] / (g - 1);
      if (sys.family == Family::PSL2R) q[1] = std::exp(q[1]);  // keep y > 0
      sup = std::max(sup, energy_of_form_at(sys, form, q));
      int i = 0;
      for (; i < d; ++i) {
        if (++idx[i] < g) break;
        idx[i] = 0;
      }
      if (i == d) break;
    }
    (level == 0 ? sup_small : sup_large) = sup;
  }
  if (sup_large > sup_small + 1e-9)
    return std::numeric_limits<double>::infinity();
  return sup_large;
}

}  // namespace

double primitive_upper_bound(const MagneticSystem& sys, OneFormId form) {
  // Validity: d theta = sigma on the declared cover, established analytically
  // for the built-in pairs.
  const bool ok =
      (form == OneFormId::Gamma &&
       (sys.family == Family::Heisenberg || sys.family == Family::PSL2R)) ||
      (form == OneFormId::DeltaPsl2 && sys.family == Family::PSL2R) ||
      (form == OneFormId::BetaTorus && sys.family == Family::TorusN) ||
      (form == OneFormId::Zero && sys.sigma.cwiseAbs().maxCoeff() == 0.0);
  if (!ok)
    throw InvalidForm("form " + form_name(form) +
                      " is not a primitive of sigma for " + family_name(sys.family));
  return grid_sup(sys, form);
}

double circle_family_action(double k, double r) {
  if (!(k > 0.0) || r < 0.0)
    throw PreconditionFailed("circle_family_action: need k > 0, r >= 0");
  return 2.0 * kPi *
         (std::sqrt(2.0 * k) * std::sinh(r) - (std::cosh(r) - 1.0) / std::sqrt(2.0));
}

double torus_circle_action(double k, double R) {
  return 2.0 * kPi * R * std::sqrt(2.0 * k) - kPi * R * R;
}

namespace {

struct FamilyScan {
  bool has_negative = false;
  double best_r = 0.0;
  double best_action = 0.0;
};

FamilyScan scan_family(CurveFamily family, double k) {
  FamilyScan out;
  out.best_action = std::numeric_limits<double>::infinity();
  if (family == CurveFamily::Psl2Circles) {
    for (double r = 0.5; r <= 40.0; r += 0.5) {
      const double a = circle_family_action(k, r);
      if (a < out.best_action) {
        out.best_action = a;
        out.best_r = r;
      }
    }
  } else {
    for (double R = 1.0; R <= 60.0; R += 1.0) {
      const double a = torus_circle_action(k, R);
      if (a < out.best_action) {
        out.best_action = a;
        out.best_r = R;
      }
    }
  }
  out.has_negative = out.best_action < -1e-12;
  return out;
}

}  // namespace

ManeEstimate critical_value_bisection(const MagneticSystem& sys, CurveFamily family,
                                      double k_lo, double k_hi, double tol) {
  if (!(k_lo > 0.0) || !(k_hi > k_lo) || !(tol > 0.0))
    throw PreconditionFailed("critical_value_bisection: need 0 < k_lo < k_hi, tol > 0");
  if ((family == CurveFamily::Psl2Circles && sys.family != Family::PSL2R) ||
      (family == CurveFamily::TorusCircles && sys.family != Family::TorusN))
    throw PreconditionFailed("curve family does not match the system");

  ManeEstimate est;
  est.witness_primitive =
      family == CurveFamily::Psl2Circles ? "delta" : "beta (cover)";
  FamilyScan top = scan_family(family, k_hi);
  if (top.has_negative) {
    est.c_lower = k_hi;
    est.c_upper = std::numeric_limits<double>::infinity();
    est.unbounded = true;
    est.witness_k = k_hi;
    est.witness_r = top.best_r;
    est.witness_speed = std::sqrt(2.0 * k_hi);
    est.witness_action = top.best_action;
    est.note = "unbounded within search ceiling";
    return est;
  }
  FamilyScan bottom = scan_family(family, k_lo);
  if (!bottom.has_negative)
    throw PreconditionFailed("bisection bracket: no negative action at k_lo");

  double lo = k_lo, hi = k_hi;
  FamilyScan lo_scan = bottom;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    FamilyScan s = scan_family(family, mid);
    if (s.has_negative) {
      lo = mid;
      lo_scan = s;
    } else {
      hi = mid;
    }
  }
  est.c_lower = lo;
  est.c_upper = hi;
  est.witness_k = lo;
  est.witness_r = lo_scan.best_r;
  est.witness_speed = std::sqrt(2.0 * lo);
  est.witness_action = lo_scan.best_action;
  return est;
}

ManeEstimate estimate_mane(const MagneticSystem& sys, double tol) {
  switch (sys.family) {
    case Family::PSL2R: {
      ManeEstimate est =
          critical_value_bisection(sys, CurveFamily::Psl2Circles, 0.01, 0.6, tol);
      est.c_upper = std::min(est.c_upper, primitive_upper_bound(sys, OneFormId::DeltaPsl2));
      est.c0_upper = primitive_upper_bound(sys, OneFormId::Gamma);
      est.note = "c bracketed by the circle family and the bounded cover "
                 "primitive; c0 from the left-invariant primitive";
      return est;
    }
    case Family::Heisenberg: {
      // c = c0 here (amenable lattice); the lower bound comes from the
      // contact obstruction: Sigma_k is not of contact type below the root
      // of the margin 2k - sqrt(2k), and contact above c0 would contradict it.
      ManeEstimate est;
      est.c0_upper = primitive_upper_bound(sys, OneFormId::Gamma);
      double lo = 0.05, hi = 0.95;
      while (hi - lo > std::min(tol, 1e-9)) {
        const double mid = 0.5 * (lo + hi);
        if (contact_diagnostic(sys, mid).verdict == ContactVerdict::NotContact)
          lo = mid;
        else
          hi = mid;
      }
      est.c_lower = lo;
      est.c_upper = est.c0_upper;
      est.witness_primitive = "gamma";
      est.note = "non-contact obstruction below the transition, gamma above";
      return est;
    }
    case Family::TorusN: {
      ManeEstimate est =
          critical_value_bisection(sys, CurveFamily::TorusCircles, 0.5, 10.0, tol);
      est.c0_upper = std::numeric_limits<double>::infinity();
      return est;
    }
    case Family::Sol: {
      ManeEstimate est;
      est.unbounded = true;
      est.c_lower = std::numeric_limits<double>::infinity();
      est.c_upper = std::numeric_limits<double>::infinity();
      est.c0_upper = std::numeric_limits<double>::infinity();
      est.note = "sigma has no bounded primitive on Sol; c is infinite";
      return est;
    }
    case Family::Nil4:
      throw UnsupportedSystem("estimate_mane: nil4");
  }
  throw UnsupportedSystem("estimate_mane");
}

}  // namespace magshell
