#include "magshell/lie_core.hpp"

#include <cmath>

#include "magshell/errors.hpp"

namespace magshell {

StructureConstants::StructureConstants(int dim)
    : dim_(dim), c_(static_cast<size_t>(dim) * dim * dim, 0.0) {}

void StructureConstants::set(int i, int j, int k, double value) {
  c_[index(i, j, k)] = value;
  c_[index(j, i, k)] = -value;
}

double StructureConstants::antisymmetry_residual() const {
  double r = 0.0;
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j)
      for (int k = 0; k < dim_; ++k)
        r = std::max(r, std::abs(c(i, j, k) + c(j, i, k)));
  return r;
}

double StructureConstants::jacobi_residual() const {
  double r = 0.0;
  for (int i = 0; i < dim_; ++i) {
    Vec xi = Vec::Zero(dim_);
    xi[i] = 1.0;
    for (int j = 0; j < dim_; ++j) {
      Vec xj = Vec::Zero(dim_);
      xj[j] = 1.0;
      for (int k = 0; k < dim_; ++k) {
        Vec xk = Vec::Zero(dim_);
        xk[k] = 1.0;
        Vec s = bracket(bracket(xi, xj, *this), xk, *this) +
                bracket(bracket(xj, xk, *this), xi, *this) +
                bracket(bracket(xk, xi, *this), xj, *this);
        r = std::max(r, s.cwiseAbs().maxCoeff());
      }
    }
  }
  return r;
}

Vec bracket(const Vec& x, const Vec& y, const StructureConstants& sc) {
  const int n = sc.dim();
  if (x.size() != n || y.size() != n)
    throw DimensionMismatch("bracket: vector dimension does not match algebra");
  Vec out = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (x[i] == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      if (y[j] == 0.0) continue;
      for (int k = 0; k < n; ++k) out[k] += x[i] * y[j] * sc.c(i, j, k);
    }
  }
  return out;
}

double poisson_bracket_coords(int i, int j, const Vec& mu,
                              const StructureConstants& sc, const Mat& sigma) {
  const int n = sc.dim();
  if (i < 0 || i >= n || j < 0 || j >= n)
    throw DimensionMismatch("poisson_bracket: coordinate index out of range");
  double v = 0.0;
  for (int k = 0; k < n; ++k) v += sc.c(i, j, k) * mu[k];
  return v - sigma(i, j);
}

Vec euler_field_raw(const Vec& mu, const StructureConstants& sc,
                    const Mat& sigma, const Mat& metric) {
  const int n = sc.dim();
  Vec h = metric * mu;  // d_mu H
  Vec out = Vec::Zero(n);
  for (int w = 0; w < n; ++w) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      if (h[i] == 0.0) continue;
      double br = 0.0;
      for (int k = 0; k < n; ++k) br += sc.c(i, w, k) * mu[k];
      v += h[i] * (br - sigma(i, w));
    }
    out[w] = v;
  }
  return out;
}

Mat euler_jacobian_raw(const Vec& mu, const StructureConstants& sc,
                       const Mat& sigma, const Mat& metric) {
  const int n = sc.dim();
  Mat out = Mat::Zero(n, n);
  // E_w(mu) = sum_i (G mu)_i [ sum_k c^k_{iw} mu_k - sigma_{iw} ]
  // dE_w/dmu_m = sum_i G_{im} [...] + sum_i (G mu)_i c^m_{iw}
  Vec h = metric * mu;
  for (int w = 0; w < n; ++w) {
    for (int m = 0; m < n; ++m) {
      double v = 0.0;
      for (int i = 0; i < n; ++i) {
        double br = 0.0;
        for (int k = 0; k < n; ++k) br += sc.c(i, w, k) * mu[k];
        v += metric(i, m) * (br - sigma(i, w));
        v += h[i] * sc.c(i, w, m);
      }
      out(w, m) = v;
    }
  }
  return out;
}

Vec euler_field_linear(const Vec& a, const Vec& mu,
                       const StructureConstants& sc, const Mat& sigma) {
  const int n = sc.dim();
  Vec out = Vec::Zero(n);
  for (int w = 0; w < n; ++w) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      if (a[i] == 0.0) continue;
      double br = 0.0;
      for (int k = 0; k < n; ++k) br += sc.c(i, w, k) * mu[k];
      v += a[i] * (br - sigma(i, w));
    }
    out[w] = v;
  }
  return out;
}

Eigen::Matrix2d exp_sl2(const Eigen::Matrix2d& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const Eigen::Matrix2d id = Eigen::Matrix2d::Identity();
  if (std::abs(det) < 1e-12) {
    // Parabolic neighbourhood: m^2 = -det m * I is tiny, sum the series.
    Eigen::Matrix2d term = id, sum = id;
    for (int k = 1; k <= 16; ++k) {
      term = (term * m) / static_cast<double>(k);
      sum += term;
      if (term.cwiseAbs().maxCoeff() < 1e-18) break;
    }
    return sum;
  }
  if (det > 0.0) {
    const double w = std::sqrt(det);
    return std::cos(w) * id + (std::sin(w) / w) * m;
  }
  const double w = std::sqrt(-det);
  return std::cosh(w) * id + (std::sinh(w) / w) * m;
}

namespace {
// (e^x - 1)/x, stable near zero.
double expm1_over(double x) {
  if (std::abs(x) < 1e-8) return 1.0 + 0.5 * x + x * x / 6.0;
  return std::expm1(x) / x;
}
}  // namespace

Eigen::Vector3d exp_heisenberg(const Eigen::Vector3d& a, double t) {
  // exp(t(a1 X1 + a2 X2 + a3 X3)) = (t a1, t a2, t a3 + t^2 a1 a2 / 2)
  return {t * a[0], t * a[1], t * a[2] + 0.5 * t * t * a[0] * a[1]};
}

Eigen::Vector3d exp_sol(const Eigen::Vector3d& a, double t) {
  const double w = a[2];
  const double u = t * w;
  return {t * a[0] * expm1_over(u), t * a[1] * expm1_over(-u), u};
}

StructureConstants heisenberg_structure() {
  StructureConstants sc(3);
  sc.set(0, 1, 2, 1.0);  // [X1, X2] = X3
  return sc;
}

StructureConstants psl2_structure() {
  StructureConstants sc(3);
  sc.set(0, 1, 2, -1.0);  // [X, Y] = -V
  sc.set(2, 0, 1, 1.0);   // [V, X] = Y
  sc.set(2, 1, 0, -1.0);  // [V, Y] = -X
  return sc;
}

StructureConstants sol_structure() {
  // Frame (E0, E1, Eu) with E0 = e^u d/dy0, E1 = e^{-u} d/dy1, Eu = d/du.
  StructureConstants sc(3);
  sc.set(2, 0, 0, 1.0);   // [Eu, E0] = E0
  sc.set(2, 1, 1, -1.0);  // [Eu, E1] = -E1
  return sc;
}

StructureConstants torus_structure(int n) { return StructureConstants(n); }

StructureConstants nil4_structure() {
  StructureConstants sc(4);
  sc.set(0, 1, 2, 1.0);  // [X1, X2] = X3
  return sc;
}

}  // namespace magshell
