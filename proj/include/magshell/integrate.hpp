#ifndef MAGSHELL_INTEGRATE_HPP
#define MAGSHELL_INTEGRATE_HPP

#include <functional>
#include <map>
#include <string>

#include "magshell/systems.hpp"

namespace magshell {

struct Trajectory {
  std::vector<double> times;
  std::vector<PhaseState> states;
  std::string method = "rk4";
  double dt = 0.0;
  double projection_residual = 0.0;  // PSL2 determinant renormalization

  size_t size() const { return times.size(); }
};

struct IntegrateOptions {
  // When > 0 every step is checked against two half steps and subdivided
  // until the step-halving estimate drops below this bound.  The cascade
  // aborts after `max_halvings` levels.
  double step_error_cap = 0.0;
  int max_halvings = 8;
  int renormalize_every = 100;  // PSL2 det projection period, in steps
};

/// Fixed-step classical RK4 flow of X_H in the ambient coordinates.
Trajectory integrate(const PhaseState& s, double t_max, double dt,
                     const MagneticSystem& sys,
                     const IntegrateOptions& opt = {});

/// Variational frame along the flow.  The frame matrix is expressed in the
/// ambient integration coordinates and equals the identity at t = 0.
struct TangentFrame {
  PhaseState base_start;
  PhaseState base_end;
  Mat frame;
};
TangentFrame tangent_flow(const PhaseState& s, double t_max, double dt,
                          const MagneticSystem& sys);

/// Casimir of the family: p_gamma (Heisenberg, PSL2), nu + a0 a1 (Sol),
/// 0 for tori (no nontrivial Casimir).
double casimir(const PhaseState& s, const MagneticSystem& sys);

struct InvariantReport {
  double energy_drift = 0.0;
  double energy_drift_rel = 0.0;
  double casimir_drift = 0.0;
  double casimir_drift_rel = 0.0;
  std::map<std::string, double> min_form_pairings;
};

InvariantReport invariant_report(const Trajectory& traj, const MagneticSystem& sys,
                                 const std::vector<OneFormId>& forms = {});

namespace detail {
using AmbientField = std::function<Vec(const Vec&)>;
Vec rk4_step(const AmbientField& f, const Vec& c, double dt);
/// One RK4 step with optional recursive step halving.
Vec rk4_step_controlled(const AmbientField& f, const Vec& c, double dt,
                        double error_cap, int max_halvings);
}  // namespace detail

}  // namespace magshell

#endif
