#ifndef MAGSHELL_MANE_HPP
#define MAGSHELL_MANE_HPP

#include <optional>
#include <string>

#include "magshell/systems.hpp"

namespace magshell {

struct ManeEstimate {
  double c_lower = 0.0;
  double c_upper = 0.0;
  double c0_upper = std::numeric_limits<double>::infinity();
  bool unbounded = false;  // negative actions persist at the search ceiling
  std::string witness_primitive;  // primitive backing c_upper / c0_upper
  double witness_r = 0.0;         // curve parameter at the last negative action
  double witness_speed = 0.0;
  double witness_k = 0.0;
  double witness_action = 0.0;
  std::string note;
};

/// sup over configuration of H(q, theta_q) for a primitive theta of sigma on
/// its cover.  Exact for the built-in constant-norm forms; +infinity for
/// forms with unbounded norm (torus beta).
double primitive_upper_bound(const MagneticSystem& sys, OneFormId form);

/// Closed-form action of the PSL2 geodesic-circle family B_r at energy k:
/// 2 pi (sqrt(2k) sinh r - (cosh r - 1)/sqrt(2)).
double circle_family_action(double k, double r);

/// Closed-form action of the torus cover circle of radius R at speed
/// sqrt(2k), area-negative orientation: 2 pi R sqrt(2k) - pi R^2.
double torus_circle_action(double k, double R);

enum class CurveFamily { Psl2Circles, TorusCircles };

/// Bisection on k for the given negative-action curve family.  The returned
/// bracket has width <= tol, or c_lower = k_hi with the unbounded flag when
/// negative actions persist at the ceiling.
ManeEstimate critical_value_bisection(const MagneticSystem& sys, CurveFamily family,
                                      double k_lo, double k_hi, double tol);

/// The per-family composite estimate the CLI reports: circle-family bisection
/// plus primitive bounds for PSL2, contact-transition bracketing for
/// Heisenberg, the unbounded report for tori and Sol.
ManeEstimate estimate_mane(const MagneticSystem& sys, double tol);

}  // namespace magshell

#endif
