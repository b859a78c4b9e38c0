#ifndef MAGSHELL_LIE_CORE_HPP
#define MAGSHELL_LIE_CORE_HPP

#include <Eigen/Dense>
#include <vector>

namespace magshell {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Structure constants c^k_{ij} of a Lie algebra, [X_i, X_j] = sum_k c^k_{ij} X_k.
class StructureConstants {
 public:
  StructureConstants() = default;
  explicit StructureConstants(int dim);

  int dim() const { return dim_; }
  double c(int i, int j, int k) const { return c_[index(i, j, k)]; }

  /// Sets c^k_{ij} and c^k_{ji} = -c^k_{ij}.
  void set(int i, int j, int k, double value);

  /// max |c[i][j][k] + c[j][i][k]|
  double antisymmetry_residual() const;
  /// max over basis triples of |[[Xi,Xj],Xk] + cyclic|
  double jacobi_residual() const;

 private:
  int index(int i, int j, int k) const { return (i * dim_ + j) * dim_ + k; }
  int dim_ = 0;
  std::vector<double> c_;
};

/// [x, y] in the frame coordinates.
Vec bracket(const Vec& x, const Vec& y, const StructureConstants& sc);

/// Poisson bracket of the momentum coordinate functions p_i, p_j at mu:
/// {p_i, p_j}(mu) = mu([X_i, X_j]) - sigma_e(X_i, X_j).
double poisson_bracket_coords(int i, int j, const Vec& mu,
                              const StructureConstants& sc, const Mat& sigma);

/// Euler vector field of H = (1/2) mu^T G mu on the dual of the algebra:
/// E_H(mu)(w) = mu([d_mu H, w]) - sigma_e(d_mu H, w).
Vec euler_field_raw(const Vec& mu, const StructureConstants& sc,
                    const Mat& sigma, const Mat& metric);

/// Exact Jacobian dE_H/dmu.
Mat euler_jacobian_raw(const Vec& mu, const StructureConstants& sc,
                       const Mat& sigma, const Mat& metric);

/// Euler field of a linear Hamiltonian f(mu) = <a, mu> (constant differential a).
Vec euler_field_linear(const Vec& a, const Vec& mu,
                       const StructureConstants& sc, const Mat& sigma);

/// exp of a traceless 2x2 matrix in closed form.  Branches on the sign of
/// det: rotation (det > 0), hyperbolic (det < 0), and a power-series fallback
/// near the parabolic boundary where the closed forms lose digits.
Eigen::Matrix2d exp_sl2(const Eigen::Matrix2d& m);

/// exp of the nilpotent Heisenberg algebra element a1*X1 + a2*X2 + a3*X3
/// (frame X1 = d/dx, X2 = d/dy + x d/dz, X3 = d/dz), returned as chart (x,y,z).
Eigen::Vector3d exp_heisenberg(const Eigen::Vector3d& a, double t);

/// exp in Sol for a0*E0 + a1*E1 + w*Eu, returned as chart (y0, y1, u).
Eigen::Vector3d exp_sol(const Eigen::Vector3d& a, double t);

/// Structure constant tables of the built-in families.
StructureConstants heisenberg_structure();
StructureConstants psl2_structure();
StructureConstants sol_structure();
StructureConstants torus_structure(int n);
StructureConstants nil4_structure();

}  // namespace magshell

#endif
