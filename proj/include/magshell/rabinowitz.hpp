#ifndef MAGSHELL_RABINOWITZ_HPP
#define MAGSHELL_RABINOWITZ_HPP

#include <cstdint>
#include <optional>

#include "magshell/dynamics.hpp"
#include "magshell/stability.hpp"
#include "magshell/systems.hpp"

namespace magshell {

/// Polygonal loop in the canonical chart of T*(universal cover) with the
/// Lagrange multiplier eta.  Columns of q and p are the N cyclic nodes.
struct DiscreteLoop {
  int N = 0;
  Mat q, p;  // d x N, canonical chart coordinates / momenta
  double eta = 0.0;
  double k = 0.0;  // reference energy defining Hbar = H - k

  void validate(const MagneticSystem& sys) const;
};

/// A(v, eta) = loop integral of the chart primitive of omega minus
/// eta * mean(Hbar), discretized with 4th-order cyclic differences.
double action(const DiscreteLoop& loop, const MagneticSystem& sys);

struct LoopGradient {
  Mat dq, dp;   // d x N
  double deta = 0.0;
};

/// Exact gradient of the discrete action in the flat l2 metric on nodes.
LoopGradient gradient(const DiscreteLoop& loop, const MagneticSystem& sys);

struct OrbitMatch {
  double C = 0.0;
  int l = 1;
  double T = 0.0;
  double omega = 0.0;
};

struct CriticalPointResult {
  DiscreteLoop loop;
  double eta = 0.0;
  double action_value = 0.0;
  double omega = 0.0;              // primitive part of the action
  double loop_residual = 0.0;      // N * max |grad_{q,p} A|
  double constraint_residual = 0.0;  // |mean Hbar|
  int iterations = 0;
  std::optional<OrbitMatch> matched;
};

struct SolveOptions {
  double tol = 1e-9;
  int max_iterations = 80;
  int match_l_max = 5;
};

/// Damped Newton search for a critical point of the discrete action with
/// unknown multiplier.  Throws NoConvergence / EscapedShell.
CriticalPointResult find_critical(const DiscreteLoop& seed,
                                  const MagneticSystem& sys,
                                  const SolveOptions& opt = {});

struct PeriodActionReport {
  double omega = 0.0;
  double eta = 0.0;
  double lambda_period = 0.0;  // loop integral of the stabilizing form
  double tame_ratio = 0.0;     // lambda_period / |omega|
};

PeriodActionReport period_action_check(const CriticalPointResult& result,
                                       const MagneticSystem& sys,
                                       const StabilizingFormRecipe* recipe = nullptr);

/// Discretizes a detected closed orbit (direction = +-1) with optional
/// relative node noise, as a solver seed.
DiscreteLoop loop_from_orbit(const MagneticSystem& sys, const ClosedOrbitRecord& rec,
                             int N, int direction = 1, double noise = 0.0,
                             uint64_t seed = 0x5eed);

DiscreteLoop constant_loop(const MagneticSystem& sys, const Vec& chart,
                           const Vec& p_frame, int N, double eta, double k);

struct HoferBound {
  double translation_scale = 0.0;  // |a|
  double support_radius = 0.0;
  double norm = 0.0;  // integral (max - min) of the cutoff Hamiltonian
};

/// Hofer norm of the explicit cutoff of h(q, p) = <a, p> that displaces the
/// torus shell of energy k (translation by Ja).
HoferBound torus_displacing_hofer_norm(const MagneticSystem& sys, double k);

}  // namespace magshell

#endif
