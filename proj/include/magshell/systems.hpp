#ifndef MAGSHELL_SYSTEMS_HPP
#define MAGSHELL_SYSTEMS_HPP

#include <optional>
#include <string>
#include <vector>

#include "magshell/lie_core.hpp"

namespace magshell {

enum class Family { TorusN, Heisenberg, PSL2R, Sol, Nil4 };

std::string family_name(Family f);
std::optional<Family> family_from_name(const std::string& name);

/// One of the built-in left-invariant magnetic systems: metric and magnetic
/// 2-form on the dual frame, plus the structure constants of the algebra.
struct MagneticSystem {
  Family family = Family::TorusN;
  int dim = 0;     // momentum (algebra) dimension
  Mat metric;      // SPD matrix on the dual frame
  Mat sigma;       // sigma_e(X_i, X_j), antisymmetric
  StructureConstants sc;

  // Torus extras: sigma(u,v) = <u, J v> plus the pieces of Lemma-style
  // kernel/image splitting used by the flow and the stabilizing form.
  Mat J;
  Mat P1;          // orthogonal projection onto Ker J
  Mat P2;          // orthogonal projection onto Im J
  Mat Ainv;        // (J restricted to Im J)^{-1}, as a map on R^n
  Mat schur_u;     // orthogonal U with U^T J U block-diagonal
  std::vector<double> block_omega;  // rotation rate of each 2x2 block

  int config_dim() const { return dim; }
  int ambient_dim() const;
};

MagneticSystem make_torus(int n, const Mat& J);
MagneticSystem make_torus2();  // n = 2, J = [[0,1],[-1,0]]
MagneticSystem make_heisenberg();
MagneticSystem make_psl2();
MagneticSystem make_sol();
MagneticSystem make_nil4();
MagneticSystem make_system(Family f);

/// Group element: a matrix for the three matrix groups, a point of R^n for
/// tori.  PSL(2,R) elements compare equal up to a global sign.
struct GroupElement {
  Family family = Family::TorusN;
  Mat m;  // n x 1 for tori; 3x3 (Heisenberg, Sol); 2x2 (PSL2)
};

GroupElement identity_element(const MagneticSystem& sys);
GroupElement group_mul(const GroupElement& a, const GroupElement& b);
/// Deviation of the matrix from the stated group (determinant/shape checks).
double group_residual(const GroupElement& g);

/// Configuration chart coordinates: q in R^n (torus), (x,y,z) (Heisenberg),
/// (x,y,theta) with y > 0 (PSL2), (y0,y1,u) (Sol).
Vec chart_of(const GroupElement& g);
GroupElement element_from_chart(const MagneticSystem& sys, const Vec& chart);

struct PhaseState {
  GroupElement q;
  Vec p;  // momenta in the left-invariant dual frame
};

PhaseState make_state(const MagneticSystem& sys, const Vec& chart, const Vec& p);

double hamiltonian(const Vec& p, const MagneticSystem& sys);

/// p' <-> frame momenta conversions for the canonical chart momenta.
Vec frame_from_canonical(const MagneticSystem& sys, const Vec& chart, const Vec& p_can);
Vec canonical_from_frame(const MagneticSystem& sys, const Vec& chart, const Vec& p_frame);

/// Frame components of a configuration chart velocity (the left-invariant
/// coframe applied to the velocity).
Vec coframe_eval(const MagneticSystem& sys, const Vec& chart, const Vec& chart_vel);

/// Squared length of a chart velocity in the system metric.
double config_speed_sq(const MagneticSystem& sys, const Vec& chart, const Vec& chart_vel);

/// Chart velocity + momentum velocity of the magnetic Hamiltonian field X_H.
struct PhaseVelocity {
  Vec chart_vel;
  Vec p_vel;
};
PhaseVelocity vector_field(const PhaseState& s, const MagneticSystem& sys);

Vec euler_field(const Vec& mu, const MagneticSystem& sys);
double poisson_bracket(int i, int j, const Vec& mu, const MagneticSystem& sys);
GroupElement exp_map(const MagneticSystem& sys, const Vec& x, double t);

// --- ambient representation used by the integrators ---------------------
// torus: (q, p); Heisenberg/Sol: (chart, p); PSL2: (four matrix entries, p).
// In these coordinates the vector fields are polynomial (plus e^u for Sol)
// and the variational equations are exact derivatives.
Vec pack_state(const MagneticSystem& sys, const PhaseState& s);
PhaseState unpack_state(const MagneticSystem& sys, const Vec& c);
Vec ambient_field(const MagneticSystem& sys, const Vec& c);
Mat ambient_jacobian(const MagneticSystem& sys, const Vec& c);
/// Ambient field of the linear Hamiltonian f = <a, p_frame> (probe flows).
Vec ambient_linear_field(const MagneticSystem& sys, const Vec& a, const Vec& c);

/// Exact flow for TorusN, Heisenberg and PSL2R.  Throws UnsupportedSystem
/// for Sol and Nil4 (numerical integration only).
PhaseState closed_form_flow(const PhaseState& s, double t, const MagneticSystem& sys);

/// Distance between phase states; PSL2 group parts compare up to sign.
double state_distance(const PhaseState& a, const PhaseState& b);

// --- distinguished 1-forms ----------------------------------------------
enum class OneFormId {
  Psi,          // nu + tau* gamma, primitive of omega (Heisenberg, PSL2)
  Gamma,        // the left-invariant primitive of sigma (Heisenberg, PSL2)
  DeltaPsl2,    // dx/y + dtheta/2, bounded primitive on the cover (PSL2)
  PhiHeis,      // (pa dpb - pb dpa)/(pa^2+pb^2)
  PhiPsl2,      // (-pa dpb + pb dpa)/(pa^2+pb^2)
  LambdaTorus,  // f*nu + (P2 pi)* alpha
  LambdaSol,    // f du + (a0 da1 - a1 da0)/2
  BetaTorus,    // beta_q(v) = <q, J v>/2
  Zero,
};

std::string form_name(OneFormId id);
bool form_valid_for(OneFormId id, Family f);

/// Value of the form on an arbitrary phase tangent (chart_vel, p_vel).
double form_value(OneFormId id, const MagneticSystem& sys, const PhaseState& s,
                  const Vec& chart_vel, const Vec& p_vel);

/// form evaluated on X_H at s.
double form_pairing(OneFormId id, const PhaseState& s, const MagneticSystem& sys);

// --- closed curves and the Lagrangian action ------------------------------
/// Closed curve on the configuration chart: N+1 samples with
/// points.front() == points.back(), strictly increasing times, and exact
/// velocities where the factory knows them.
struct CurveSamples {
  std::vector<double> times;
  std::vector<Vec> points;
  std::vector<Vec> velocities;

  int segments() const { return static_cast<int>(times.size()) - 1; }
  void validate() const;  // closure, monotone times, N >= 8
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;  // from N vs N/2 Richardson comparison
};

/// A_{L+k}(curve) = integral of (|v|^2/2 - U + theta(v) + k) dt, U = 0.
QuadratureResult lagrangian_action(const CurveSamples& curve, double k,
                                   OneFormId theta, const MagneticSystem& sys);

/// Boundary of a hyperbolic disk of radius r, x compressed by 1/sqrt(2),
/// clockwise at constant speed sqrt(2k): the PSL2 negative-action family.
CurveSamples psl2_circle_curve(double k, double r, int n_samples);

/// Round trip of radius R at speed `speed` on the flat torus cover;
/// orientation < 0 encloses area with negative beta-circulation.
CurveSamples torus_circle_curve(const MagneticSystem& sys, double R,
                                double speed, int orientation, int n_samples);

CurveSamples constant_curve(const MagneticSystem& sys, const Vec& chart_point,
                            double duration, int n_samples);

}  // namespace magshell

#endif
