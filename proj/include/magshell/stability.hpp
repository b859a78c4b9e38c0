#ifndef MAGSHELL_STABILITY_HPP
#define MAGSHELL_STABILITY_HPP

#include <cstdint>

#include "magshell/dynamics.hpp"
#include "magshell/systems.hpp"

namespace magshell {

enum class RecipeKind {
  BumpProfiles,     // lambda = f(p_gamma) psi + g(p_gamma) phi
  PsiOnly,          // contact range: lambda = psi
  TorusClosedForm,  // f* nu + (P2 pi)* alpha
  SolClosedForm,    // f du + (a0 da1 - a1 da0)/2
};

/// A stabilizing 1-form on Sigma_k.  Bump recipes are built from the
/// polynomial bump q(t) = (1 - (t/w)^2)^3 and evaluated through its exact
/// antiderivatives; the sampled profile arrays are carried for serialization.
struct StabilizingFormRecipe {
  Family system = Family::Heisenberg;
  double k = 0.0;
  RecipeKind kind = RecipeKind::BumpProfiles;

  double t_coef = 1.0;  // 1 Heisenberg, 2 PSL2
  double width = 0.0;   // bump half-width around p_gamma = -2k
  double sign = 1.0;    // orientation keeping r >= 0 near -2k
  double balance_residual = 0.0;  // quadrature check of the weighted integral

  int n_samples = 2048;
  std::vector<double> grid, f_samples, fp_samples, g_samples, gp_samples;

  double f(double pg) const;
  double fprime(double pg) const;
  double g(double pg) const;
  double gprime(double pg) const;
};

/// Builds the stabilizing recipe for the level k.  Throws NotStable at the
/// critical levels (k = 1/2 for Heisenberg, k in {1/4, 1/2} for PSL2).
StabilizingFormRecipe build_profiles(const MagneticSystem& sys, double k);

/// lambda evaluated on an arbitrary phase tangent (chart, frame-momentum
/// velocity components).
double lambda_value(const StabilizingFormRecipe& r, const MagneticSystem& sys,
                    const PhaseState& s, const Vec& chart_vel, const Vec& p_vel);
double lambda_pairing(const StabilizingFormRecipe& r, const MagneticSystem& sys,
                      const PhaseState& s);

/// i_{X_H} d lambda evaluated on a tangent w = (w_chart, w_p), by exact
/// differentiation of the structured recipe.
double lambda_contraction_residual(const StabilizingFormRecipe& r,
                                   const MagneticSystem& sys, const PhaseState& s,
                                   const Vec& w_chart, const Vec& w_p);

struct VerifyReport {
  double min_pairing = 0.0;   // min lambda(X_H) over the shell grid
  double max_residual = 0.0;  // max |i_{X_H} d lambda(w)| over shell tangents
  Vec worst_pairing_momentum;
  Vec worst_residual_momentum;
  bool passed(double residual_cap = 1e-8) const {
    return min_pairing > 0.0 && max_residual < residual_cap;
  }
};

VerifyReport verify_stabilizing(const StabilizingFormRecipe& recipe,
                                const MagneticSystem& sys, int grid = 128,
                                int tangents_per_point = 4,
                                uint64_t seed = 0x5eed);

/// Positive combinations a*r1 + b*r2 (the stabilizing cone).
VerifyReport verify_stabilizing_combination(
    const std::vector<std::pair<double, const StabilizingFormRecipe*>>& combo,
    const MagneticSystem& sys, int grid = 128, int tangents_per_point = 4,
    uint64_t seed = 0x5eed);

enum class ContactVerdict { Contact, NotContact, Boundary };
std::string verdict_name(ContactVerdict v);

struct ContactDiagnosis {
  ContactVerdict verdict = ContactVerdict::Boundary;
  double margin = 0.0;  // min psi(X_H) over the shell = 2k - sqrt(2k)
  // Signed pairings backing a NotContact verdict: the distinguished orbit
  // with p_gamma = -sqrt(2k) (nonpositive), its mirror (positive), and the
  // Liouville-measure pairing 2k.
  double orbit_integral_minus = 0.0;
  double orbit_integral_plus = 0.0;
  double orbit_period = 0.0;
  double liouville_pairing = 0.0;
};

ContactDiagnosis contact_diagnostic(const MagneticSystem& sys, double k);

struct VirtualContactBound {
  double epsilon = 0.0;
  double epsilon_sq = 0.0;
  double sampled_min = 0.0;  // min of (nu + tau* delta)(X_H) along trajectories
  double sup_norm_bound = 0.0;
};

/// PSL2 virtual-contact certificate for k > 1/4, sampled along trajectories
/// on the cover.
VirtualContactBound virtual_contact_bound(const MagneticSystem& sys, double k,
                                          int n_trajectories = 8,
                                          double t_max = 20.0, double dt = 1e-3,
                                          uint64_t seed = 0x5eed);

/// lambda-period of a closed orbit divided by |Omega|.
double tame_ratio(const StabilizingFormRecipe& recipe, const MagneticSystem& sys,
                  const ClosedOrbitRecord& rec, int base_samples = 2048);

/// Contraction of the contact primitive with the Euler field on the dual of
/// the 4-dimensional nilpotent algebra: equals (x1^2 + 2 x2^2 + x3^2)/2.
double nil4_contact_pairing(const Vec& mu);

}  // namespace magshell

#endif
