#ifndef MAGSHELL_DYNAMICS_HPP
#define MAGSHELL_DYNAMICS_HPP

#include "magshell/integrate.hpp"
#include "magshell/systems.hpp"

namespace magshell {

/// A verified closed contractible orbit family member.
struct ClosedOrbitRecord {
  Family system = Family::TorusN;
  double k = 0.0;
  double C = 0.0;       // conserved momentum (p_gamma / C; 0 for tori)
  double A = 0.0;       // sqrt(2k - C^2)
  double mu = 0.0;      // rotation frequency of the momentum circle
  double T = 0.0;       // period of this record (= l * primitive period)
  int l = 1;            // multiplicity
  double omega = 0.0;   // omega-energy, quadrature along the verified loop
  bool contractible = true;
  int homotopy_m = 0, homotopy_l = 0;  // PSL2: class is m[d] - l[R]
  double return_distance = 0.0;        // closed-form flow over T
  double loop_gap = 0.0;               // lifted configuration closure gap

  /// A phase point on the orbit.
  PhaseState representative(const MagneticSystem& sys) const;
};

/// All closed contractible orbit families on the energy level k, multiplicity
/// capped at l_max.  Empty when the level has none (Heisenberg k >= 1/2,
/// PSL2 k >= 1/4, Sol always: no closed-form family is known).
std::vector<ClosedOrbitRecord> contractible_orbits(const MagneticSystem& sys,
                                                   double k, int l_max = 5);

/// Quadrature of the primitive of omega along a closed lifted loop.
/// Throws if the loop fails to close in the universal cover (gap > 1e-6).
double omega_energy(const Trajectory& traj, const MagneticSystem& sys);

enum class OrbitType { Elliptic, Parabolic, Hyperbolic };
std::string orbit_type_name(OrbitType t);

/// Sign classification of the constant matrix governing the PSL2 flow:
/// elliptic if (1+C)^2 > A^2, hyperbolic if <, parabolic in a 1e-12 band.
OrbitType classify_psl2(double C, double A);

struct LyapunovResult {
  double exponent = 0.0;
  double confidence = 0.0;  // disagreement between window slopes
  bool converged = false;
  double t_max = 0.0;
};

/// Top exponent of the variational flow along the trajectory through s,
/// from the norm growth of a periodically renormalized tangent vector
/// seeded with the phase velocity.  The slope is fitted over the second
/// half of the accumulated log-growth record.
LyapunovResult lyapunov_exponent(const MagneticSystem& sys, const PhaseState& s,
                                 double t_max, double dt);

/// True iff no hyperbolic matrix exists on the PSL2 shell of energy k:
/// min over admissible C of 2C^2 + 2C + 1 - 2k is nonnegative (k <= 1/4).
bool entropy_threshold(double k);
double entropy_margin(double k);  // the minimum itself

struct DisplacementCertificate {
  std::string probe;                 // probe Hamiltonian id
  double growth_coefficient = 0.0;   // lower bound on the displaced rate
  double exit_time_bound = 0.0;      // analytic upper bound
  double simulated_exit_time = 0.0;  // first crossing of the shell bound
  double shell_bound = 0.0;          // sqrt(2k)
};

/// Flows the displacing probe Hamiltonian from a worst-case shell point and
/// certifies that the displaced coordinate leaves [-sqrt(2k), sqrt(2k)].
DisplacementCertificate displacement_probe(const MagneticSystem& sys, double k);

/// Samples a trajectory of the exact flow (or RK4 where no closed form
/// exists) at n+1 uniform times on [0, T].
Trajectory sample_orbit(const PhaseState& s, double T, int n,
                        const MagneticSystem& sys);

}  // namespace magshell

#endif
