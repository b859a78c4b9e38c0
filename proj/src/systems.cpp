#include "magshell/systems.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "magshell/errors.hpp"

namespace magshell {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Stable trigonometric kernels for the Heisenberg flow.
double sinc(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}
// (cos x - 1)/x, written via sin^2(x/2) to avoid cancellation.
double cosm1_over(double x) {
  if (x == 0.0) return 0.0;
  const double s = std::sin(0.5 * x);
  return -2.0 * s * s / x;
}
// (cos x - 1)/x^2
double cosm1_over2(double x) {
  if (std::abs(x) < 1e-8) return -0.5 + x * x / 24.0;
  const double s = std::sin(0.5 * x);
  return -2.0 * s * s / (x * x);
}
// (1 - sinc x)/x^2
double sinc1(double x) {
  if (std::abs(x) < 0.05)
    return 1.0 / 6.0 - x * x / 120.0 + x * x * x * x / 5040.0;
  return (1.0 - sinc(x)) / (x * x);
}

Eigen::Matrix2d sl2_basis_X() {
  Eigen::Matrix2d m;
  m << 0.5, 0.0, 0.0, -0.5;
  return m;
}
Eigen::Matrix2d sl2_basis_Y() {
  Eigen::Matrix2d m;
  m << 0.0, -0.5, -0.5, 0.0;
  return m;
}
Eigen::Matrix2d sl2_basis_V() {
  Eigen::Matrix2d m;
  m << 0.0, 0.5, -0.5, 0.0;
  return m;
}

Eigen::Matrix2d sl2_from_frame(const Eigen::Vector3d& p) {
  return p[0] * sl2_basis_X() + p[1] * sl2_basis_Y() + p[2] * sl2_basis_V();
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::TorusN: return "torus";
    case Family::Heisenberg: return "heisenberg";
    case Family::PSL2R: return "psl2";
    case Family::Sol: return "sol";
    case Family::Nil4: return "nil4";
  }
  return "?";
}

std::optional<Family> family_from_name(const std::string& name) {
  if (name == "torus") return Family::TorusN;
  if (name == "heisenberg" || name == "heis") return Family::Heisenberg;
  if (name == "psl2" || name == "psl2r") return Family::PSL2R;
  if (name == "sol") return Family::Sol;
  if (name == "nil4") return Family::Nil4;
  return std::nullopt;
}

int MagneticSystem::ambient_dim() const {
  switch (family) {
    case Family::TorusN: return 2 * dim;
    case Family::Heisenberg: return 6;
    case Family::PSL2R: return 7;
    case Family::Sol: return 6;
    case Family::Nil4: return 4;  // momentum space only
  }
  return 0;
}

MagneticSystem make_torus(int n, const Mat& J) {
  if (n < 2 || J.rows() != n || J.cols() != n)
    throw DimensionMismatch("make_torus: need n >= 2 and an n x n map J");
  if ((J + J.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + J.cwiseAbs().maxCoeff()))
    throw PreconditionFailed("make_torus: J must be antisymmetric");
  MagneticSystem s;
  s.family = Family::TorusN;
  s.dim = n;
  s.metric = Mat::Identity(n, n);
  s.sigma = Mat(J);  // sigma(e_i, e_j) = <e_i, J e_j> = J_{ij}
  s.sc = torus_structure(n);
  s.J = J;

  // Kernel / image splitting with an SVD pseudo-inverse restricted to Im J.
  Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double tol = 1e-10 * (1.0 + svd.singularValues().cwiseAbs().maxCoeff());
  Mat pinv = Mat::Zero(n, n);
  Mat p2 = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double sv = svd.singularValues()[i];
    if (sv > tol) {
      pinv += svd.matrixV().col(i) * svd.matrixU().col(i).transpose() / sv;
      p2 += svd.matrixU().col(i) * svd.matrixU().col(i).transpose();
    }
  }
  s.Ainv = pinv;
  s.P2 = p2;
  s.P1 = Mat::Identity(n, n) - p2;

  // Real Schur form: orthogonal U with U^T J U block diagonal, one rotation
  // rate per 2x2 block.
  Eigen::RealSchur<Mat> schur(J);
  s.schur_u = schur.matrixU();
  Mat T = schur.matrixT();
  s.block_omega.assign(n, 0.0);
  for (int i = 0; i + 1 < n;) {
    if (std::abs(T(i + 1, i)) > tol) {
      s.block_omega[i] = T(i, i + 1);
      s.block_omega[i + 1] = T(i + 1, i);
      i += 2;
    } else {
      ++i;
    }
  }
  return s;
}

MagneticSystem make_torus2() {
  Mat J(2, 2);
  J << 0, 1, -1, 0;
  return make_torus(2, J);
}

MagneticSystem make_heisenberg() {
  MagneticSystem s;
  s.family = Family::Heisenberg;
  s.dim = 3;
  s.metric = Mat::Identity(3, 3);
  s.sigma = Mat::Zero(3, 3);
  s.sigma(0, 1) = -1.0;  // sigma = -dx ^ dy
  s.sigma(1, 0) = 1.0;
  s.sc = heisenberg_structure();
  return s;
}

MagneticSystem make_psl2() {
  MagneticSystem s;
  s.family = Family::PSL2R;
  s.dim = 3;
  s.metric = Mat::Identity(3, 3);
  s.sigma = Mat::Zero(3, 3);
  s.sigma(0, 1) = 1.0;  // sigma = d gamma, sigma(X, Y) = 1
  s.sigma(1, 0) = -1.0;
  s.sc = psl2_structure();
  return s;
}

MagneticSystem make_sol() {
  MagneticSystem s;
  s.family = Family::Sol;
  s.dim = 3;
  s.metric = Mat::Identity(3, 3);
  s.sigma = Mat::Zero(3, 3);
  s.sigma(0, 1) = -1.0;  // sigma = -dy0 ^ dy1 = -e0 ^ e1 in the left frame
  s.sigma(1, 0) = 1.0;
  s.sc = sol_structure();
  return s;
}

MagneticSystem make_nil4() {
  MagneticSystem s;
  s.family = Family::Nil4;
  s.dim = 4;
  s.metric = Mat::Identity(4, 4);
  s.sigma = Mat::Zero(4, 4);
  s.sigma(0, 2) = -1.0;  // sigma = -e1^e3 - e2^e4
  s.sigma(2, 0) = 1.0;
  s.sigma(1, 3) = -1.0;
  s.sigma(3, 1) = 1.0;
  s.sc = nil4_structure();
  return s;
}

MagneticSystem make_system(Family f) {
  switch (f) {
    case Family::TorusN: return make_torus2();
    case Family::Heisenberg: return make_heisenberg();
    case Family::PSL2R: return make_psl2();
    case Family::Sol: return make_sol();
    case Family::Nil4: return make_nil4();
  }
  throw UnsupportedSystem("unknown family");
}

GroupElement identity_element(const MagneticSystem& sys) {
  GroupElement g;
  g.family = sys.family;
  switch (sys.family) {
    case Family::TorusN: g.m = Mat::Zero(sys.dim, 1); break;
    case Family::Heisenberg:
    case Family::Sol: g.m = Mat::Identity(3, 3); break;
    case Family::PSL2R: g.m = Mat::Identity(2, 2); break;
    case Family::Nil4:
      throw UnsupportedSystem("nil4 has no group chart in this artifact");
  }
  return g;
}

GroupElement group_mul(const GroupElement& a, const GroupElement& b) {
  if (a.family != b.family) throw DimensionMismatch("group_mul: family mismatch");
  GroupElement g;
  g.family = a.family;
  if (a.family == Family::TorusN)
    g.m = a.m + b.m;
  else
    g.m = a.m * b.m;
  return g;
}

double group_residual(const GroupElement& g) {
  switch (g.family) {
    case Family::TorusN: {
      return g.m.allFinite() ? 0.0 : std::numeric_limits<double>::infinity();
    }
    case Family::Heisenberg: {
      double r = 0.0;
      r = std::max(r, std::abs(g.m(0, 0) - 1.0));
      r = std::max(r, std::abs(g.m(1, 1) - 1.0));
      r = std::max(r, std::abs(g.m(2, 2) - 1.0));
      r = std::max(r, std::abs(g.m(1, 0)));
      r = std::max(r, std::abs(g.m(2, 0)));
      r = std::max(r, std::abs(g.m(2, 1)));
      return r;
    }
    case Family::PSL2R:
      return std::abs(g.m(0, 0) * g.m(1, 1) - g.m(0, 1) * g.m(1, 0) - 1.0);
    case Family::Sol: {
      double r = 0.0;
      r = std::max(r, std::abs(g.m(0, 0) * g.m(1, 1) - 1.0));
      r = std::max(r, std::abs(g.m(0, 1)));
      r = std::max(r, std::abs(g.m(1, 0)));
      r = std::max(r, std::abs(g.m(2, 0)));
      r = std::max(r, std::abs(g.m(2, 1)));
      r = std::max(r, std::abs(g.m(2, 2) - 1.0));
      return r;
    }
    case Family::Nil4: break;
  }
  throw UnsupportedSystem("group_residual: nil4");
}

Vec chart_of(const GroupElement& g) {
  switch (g.family) {
    case Family::TorusN: return g.m.col(0);
    case Family::Heisenberg: {
      Vec c(3);
      c << g.m(0, 1), g.m(1, 2), g.m(0, 2);
      return c;
    }
    case Family::PSL2R: {
      const double a = g.m(0, 0), b = g.m(0, 1), cc = g.m(1, 0), d = g.m(1, 1);
      const double den = cc * cc + d * d;
      Vec c(3);
      c[1] = 1.0 / den;
      c[0] = (a * cc + b * d) / den;
      c[2] = 0.5 * kPi - 2.0 * std::atan2(cc, d);
      if (!(c[1] > 0.0)) throw PreconditionFailed("psl2 chart: y <= 0");
      return c;
    }
    case Family::Sol: {
      Vec c(3);
      c << g.m(0, 2), g.m(1, 2), std::log(g.m(0, 0));
      return c;
    }
    case Family::Nil4: break;
  }
  throw UnsupportedSystem("chart_of: nil4");
}

GroupElement element_from_chart(const MagneticSystem& sys, const Vec& chart) {
  GroupElement g;
  g.family = sys.family;
  switch (sys.family) {
    case Family::TorusN:
      g.m = chart;
      return g;
    case Family::Heisenberg: {
      g.m = Mat::Identity(3, 3);
      g.m(0, 1) = chart[0];
      g.m(1, 2) = chart[1];
      g.m(0, 2) = chart[2];
      return g;
    }
    case Family::PSL2R: {
      const double x = chart[0], y = chart[1], th = chart[2];
      if (!(y > 0.0)) throw PreconditionFailed("psl2 chart: y must be positive");
      const double sy = std::sqrt(y);
      Eigen::Matrix2d n;
      n << sy, x / sy, 0.0, 1.0 / sy;
      const double s = 0.5 * (th - 0.5 * kPi);
      Eigen::Matrix2d r;
      r << std::cos(s), std::sin(s), -std::sin(s), std::cos(s);
      g.m = n * r;
      return g;
    }
    case Family::Sol: {
      g.m = Mat::Zero(3, 3);
      g.m(0, 0) = std::exp(chart[2]);
      g.m(1, 1) = std::exp(-chart[2]);
      g.m(0, 2) = chart[0];
      g.m(1, 2) = chart[1];
      g.m(2, 2) = 1.0;
      return g;
    }
    case Family::Nil4: break;
  }
  throw UnsupportedSystem("element_from_chart: nil4");
}

PhaseState make_state(const MagneticSystem& sys, const Vec& chart, const Vec& p) {
  if (p.size() != sys.dim) throw DimensionMismatch("make_state: momentum dim");
  return PhaseState{element_from_chart(sys, chart), p};
}

double hamiltonian(const Vec& p, const MagneticSystem& sys) {
  if (p.size() != sys.dim) throw DimensionMismatch("hamiltonian: momentum dim");
  return 0.5 * p.dot(sys.metric * p);
}

Vec frame_from_canonical(const MagneticSystem& sys, const Vec& chart, const Vec& pc) {
  switch (sys.family) {
    case Family::TorusN: return pc;
    case Family::Heisenberg: {
      Vec p(3);
      p << pc[0], pc[1] + chart[0] * pc[2], pc[2];
      return p;
    }
    case Family::PSL2R: {
      const double y = chart[1], th = chart[2];
      const double w = y * pc[0] - pc[2];
      Vec p(3);
      p << w * std::cos(th) + y * pc[1] * std::sin(th),
          -w * std::sin(th) + y * pc[1] * std::cos(th), pc[2];
      return p;
    }
    case Family::Sol: {
      Vec p(3);
      p << std::exp(chart[2]) * pc[0], std::exp(-chart[2]) * pc[1], pc[2];
      return p;
    }
    case Family::Nil4: return pc;
  }
  throw UnsupportedSystem("frame_from_canonical");
}

Vec canonical_from_frame(const MagneticSystem& sys, const Vec& chart, const Vec& pf) {
  switch (sys.family) {
    case Family::TorusN: return pf;
    case Family::Heisenberg: {
      Vec p(3);
      p << pf[0], pf[1] - chart[0] * pf[2], pf[2];
      return p;
    }
    case Family::PSL2R: {
      const double y = chart[1], th = chart[2];
      Vec p(3);
      const double w = pf[0] * std::cos(th) - pf[1] * std::sin(th);
      p << (w + pf[2]) / y, (pf[0] * std::sin(th) + pf[1] * std::cos(th)) / y, pf[2];
      return p;
    }
    case Family::Sol: {
      Vec p(3);
      p << std::exp(-chart[2]) * pf[0], std::exp(chart[2]) * pf[1], pf[2];
      return p;
    }
    case Family::Nil4: return pf;
  }
  throw UnsupportedSystem("canonical_from_frame");
}

Vec coframe_eval(const MagneticSystem& sys, const Vec& chart, const Vec& v) {
  switch (sys.family) {
    case Family::TorusN: return v;
    case Family::Heisenberg: {
      Vec f(3);
      f << v[0], v[1], v[2] - chart[0] * v[1];
      return f;
    }
    case Family::PSL2R: {
      const double y = chart[1], th = chart[2];
      Vec f(3);
      f << (std::cos(th) * v[0] + std::sin(th) * v[1]) / y,
          (-std::sin(th) * v[0] + std::cos(th) * v[1]) / y, v[0] / y + v[2];
      return f;
    }
    case Family::Sol: {
      Vec f(3);
      f << std::exp(-chart[2]) * v[0], std::exp(chart[2]) * v[1], v[2];
      return f;
    }
    case Family::Nil4: break;
  }
  throw UnsupportedSystem("coframe_eval");
}

double config_speed_sq(const MagneticSystem& sys, const Vec& chart, const Vec& v) {
  Vec f = coframe_eval(sys, chart, v);
  return f.dot(sys.metric * f);
}

PhaseVelocity vector_field(const PhaseState& s, const MagneticSystem& sys) {
  PhaseVelocity out;
  out.p_vel = euler_field(s.p, sys);
  switch (sys.family) {
    case Family::TorusN: {
      out.chart_vel = sys.metric * s.p;
      return out;
    }
    case Family::Heisenberg: {
      Vec c = chart_of(s.q);
      out.chart_vel = Vec(3);
      out.chart_vel << s.p[0], s.p[1], c[0] * s.p[1] + s.p[2];
      return out;
    }
    case Family::PSL2R: {
      Vec c = chart_of(s.q);
      const double y = c[1], th = c[2];
      out.chart_vel = Vec(3);
      out.chart_vel << y * (s.p[0] * std::cos(th) - s.p[1] * std::sin(th)),
          y * (s.p[0] * std::sin(th) + s.p[1] * std::cos(th)),
          s.p[2] - s.p[0] * std::cos(th) + s.p[1] * std::sin(th);
      return out;
    }
    case Family::Sol: {
      Vec c = chart_of(s.q);
      out.chart_vel = Vec(3);
      out.chart_vel << std::exp(c[2]) * s.p[0], std::exp(-c[2]) * s.p[1], s.p[2];
      return out;
    }
    case Family::Nil4:
      throw UnsupportedSystem("vector_field: nil4 is momentum-space only");
  }
  throw UnsupportedSystem("vector_field");
}

Vec euler_field(const Vec& mu, const MagneticSystem& sys) {
  return euler_field_raw(mu, sys.sc, sys.sigma, sys.metric);
}

double poisson_bracket(int i, int j, const Vec& mu, const MagneticSystem& sys) {
  return poisson_bracket_coords(i, j, mu, sys.sc, sys.sigma);
}

GroupElement exp_map(const MagneticSystem& sys, const Vec& x, double t) {
  GroupElement g;
  g.family = sys.family;
  switch (sys.family) {
    case Family::TorusN:
      g.m = t * x;
      return g;
    case Family::Heisenberg: {
      Eigen::Vector3d c = exp_heisenberg(Eigen::Vector3d(x[0], x[1], x[2]), t);
      return element_from_chart(sys, Vec(c));
    }
    case Family::PSL2R: {
      g.m = exp_sl2(Eigen::Matrix2d(t * sl2_from_frame(Eigen::Vector3d(x[0], x[1], x[2]))));
      return g;
    }
    case Family::Sol: {
      Eigen::Vector3d c = exp_sol(Eigen::Vector3d(x[0], x[1], x[2]), t);
      return element_from_chart(sys, Vec(c));
    }
    case Family::Nil4: break;
  }
  throw UnsupportedSystem("exp_map: nil4");
}

// --- ambient representation ------------------------------------------------

Vec pack_state(const MagneticSystem& sys, const PhaseState& s) {
  const int n = sys.dim;
  if (sys.family == Family::PSL2R) {
    Vec c(7);
    c << s.q.m(0, 0), s.q.m(0, 1), s.q.m(1, 0), s.q.m(1, 1), s.p[0], s.p[1], s.p[2];
    return c;
  }
  Vec c(2 * n);
  c.head(n) = (sys.family == Family::TorusN) ? Vec(s.q.m.col(0)) : chart_of(s.q);
  c.tail(n) = s.p;
  return c;
}

PhaseState unpack_state(const MagneticSystem& sys, const Vec& c) {
  PhaseState s;
  if (sys.family == Family::PSL2R) {
    s.q.family = sys.family;
    s.q.m = Mat(2, 2);
    s.q.m << c[0], c[1], c[2], c[3];
    s.p = c.tail(3);
    return s;
  }
  const int n = sys.dim;
  s.q = element_from_chart(sys, c.head(n));
  s.p = c.tail(n);
  return s;
}

Vec ambient_field(const MagneticSystem& sys, const Vec& c) {
  switch (sys.family) {
    case Family::TorusN: {
      const int n = sys.dim;
      Vec out(2 * n);
      out.head(n) = c.tail(n);
      out.tail(n) = sys.J * c.tail(n);
      return out;
    }
    case Family::Heisenberg: {
      const double x = c[0], pa = c[3], pb = c[4], pg = c[5];
      Vec out(6);
      out << pa, pb, x * pb + pg, -pb * pg - pb, pa * pg + pa, 0.0;
      return out;
    }
    case Family::PSL2R: {
      const double pa = c[4], pb = c[5], pg = c[6];
      Eigen::Matrix2d g;
      g << c[0], c[1], c[2], c[3];
      Eigen::Matrix2d gdot = g * sl2_from_frame(Eigen::Vector3d(pa, pb, pg));
      Vec out(7);
      out << gdot(0, 0), gdot(0, 1), gdot(1, 0), gdot(1, 1),
          2.0 * pb * pg + pb, -2.0 * pa * pg - pa, 0.0;
      return out;
    }
    case Family::Sol: {
      const double u = c[2], a0 = c[3], a1 = c[4], nu = c[5];
      Vec out(6);
      out << std::exp(u) * a0, std::exp(-u) * a1, nu,
          nu * a0 - a1, a0 - nu * a1, a1 * a1 - a0 * a0;
      return out;
    }
    case Family::Nil4: {
      return euler_field(c, sys);
    }
  }
  throw UnsupportedSystem("ambient_field");
}

Mat ambient_jacobian(const MagneticSystem& sys, const Vec& c) {
  switch (sys.family) {
    case Family::TorusN: {
      const int n = sys.dim;
      Mat out = Mat::Zero(2 * n, 2 * n);
      out.topRightCorner(n, n) = Mat::Identity(n, n);
      out.bottomRightCorner(n, n) = sys.J;
      return out;
    }
    case Family::Heisenberg: {
      const double x = c[0], pa = c[3], pb = c[4], pg = c[5];
      Mat out = Mat::Zero(6, 6);
      out(0, 3) = 1.0;
      out(1, 4) = 1.0;
      out(2, 0) = pb;
      out(2, 4) = x;
      out(2, 5) = 1.0;
      out(3, 4) = -pg - 1.0;
      out(3, 5) = -pb;
      out(4, 3) = pg + 1.0;
      out(4, 5) = pa;
      return out;
    }
    case Family::PSL2R: {
      const double pa = c[4], pb = c[5], pg = c[6];
      Eigen::Matrix2d g;
      g << c[0], c[1], c[2], c[3];
      Eigen::Matrix2d a = sl2_from_frame(Eigen::Vector3d(pa, pb, pg));
      Mat out = Mat::Zero(7, 7);
      // d(g a)/dg: row i of g a depends on row i of g through a^T.
      out(0, 0) = a(0, 0); out(0, 1) = a(1, 0);
      out(1, 0) = a(0, 1); out(1, 1) = a(1, 1);
      out(2, 2) = a(0, 0); out(2, 3) = a(1, 0);
      out(3, 2) = a(0, 1); out(3, 3) = a(1, 1);
      const Eigen::Matrix2d gX = g * sl2_basis_X(), gY = g * sl2_basis_Y(),
                            gV = g * sl2_basis_V();
      const Eigen::Matrix2d* dp[3] = {&gX, &gY, &gV};
      for (int j = 0; j < 3; ++j) {
        out(0, 4 + j) = (*dp[j])(0, 0);
        out(1, 4 + j) = (*dp[j])(0, 1);
        out(2, 4 + j) = (*dp[j])(1, 0);
        out(3, 4 + j) = (*dp[j])(1, 1);
      }
      out(4, 5) = 2.0 * pg + 1.0;
      out(4, 6) = 2.0 * pb;
      out(5, 4) = -2.0 * pg - 1.0;
      out(5, 6) = -2.0 * pa;
      return out;
    }
    case Family::Sol: {
      const double u = c[2], a0 = c[3], a1 = c[4], nu = c[5];
      const double eu = std::exp(u), emu = std::exp(-u);
      Mat out = Mat::Zero(6, 6);
      out(0, 2) = eu * a0;  out(0, 3) = eu;
      out(1, 2) = -emu * a1; out(1, 4) = emu;
      out(2, 5) = 1.0;
      out(3, 3) = nu;  out(3, 4) = -1.0; out(3, 5) = a0;
      out(4, 3) = 1.0; out(4, 4) = -nu;  out(4, 5) = -a1;
      out(5, 3) = -2.0 * a0; out(5, 4) = 2.0 * a1;
      return out;
    }
    case Family::Nil4:
      return euler_jacobian_raw(c, sys.sc, sys.sigma, sys.metric);
  }
  throw UnsupportedSystem("ambient_jacobian");
}

Vec ambient_linear_field(const MagneticSystem& sys, const Vec& a, const Vec& c) {
  // Hamiltonian f = <a, p_frame>: group part moves along the frame direction
  // a, momentum part is the linear Euler field.
  PhaseState s = unpack_state(sys, c);
  Vec pdot = euler_field_linear(a, s.p, sys.sc, sys.sigma);
  switch (sys.family) {
    case Family::TorusN: {
      const int n = sys.dim;
      Vec out(2 * n);
      out.head(n) = a;
      out.tail(n) = pdot;
      return out;
    }
    case Family::Heisenberg: {
      Vec ch = chart_of(s.q);
      Vec out(6);
      out << a[0], a[1], ch[0] * a[1] + a[2], pdot[0], pdot[1], pdot[2];
      return out;
    }
    case Family::PSL2R: {
      Eigen::Matrix2d gdot = Eigen::Matrix2d(s.q.m) * sl2_from_frame(Eigen::Vector3d(a[0], a[1], a[2]));
      Vec out(7);
      out << gdot(0, 0), gdot(0, 1), gdot(1, 0), gdot(1, 1), pdot[0], pdot[1], pdot[2];
      return out;
    }
    case Family::Sol: {
      Vec ch = chart_of(s.q);
      Vec out(6);
      out << std::exp(ch[2]) * a[0], std::exp(-ch[2]) * a[1], a[2],
          pdot[0], pdot[1], pdot[2];
      return out;
    }
    case Family::Nil4:
      return pdot;
  }
  throw UnsupportedSystem("ambient_linear_field");
}

// --- closed-form flows -------------------------------------------------------

namespace {

PhaseState torus_flow(const PhaseState& s, double t, const MagneticSystem& sys) {
  const int n = sys.dim;
  const Mat& U = sys.schur_u;
  Vec pw = U.transpose() * s.p;
  Vec ep(n), ip(n);  // e^{tJ} p and  int_0^t e^{sJ} p ds, in Schur coords
  for (int i = 0; i < n;) {
    const double w = sys.block_omega[i];
    if (w != 0.0) {
      const double cw = std::cos(w * t), sw = std::sin(w * t);
      const double a = pw[i], b = pw[i + 1];
      ep[i] = cw * a + sw * b;
      ep[i + 1] = -sw * a + cw * b;
      // int of the rotation block: [[sin wt, 1-cos wt], [-(1-cos wt), sin wt]]/w
      const double swi = t * sinc(w * t);
      const double cwi = -t * cosm1_over(w * t);  // (1 - cos wt)/w
      ip[i] = swi * a + cwi * b;
      ip[i + 1] = -cwi * a + swi * b;
      i += 2;
    } else {
      ep[i] = pw[i];
      ip[i] = t * pw[i];
      ++i;
    }
  }
  PhaseState out;
  out.q.family = Family::TorusN;
  out.q.m = Mat(s.q.m.col(0) + U * ip);
  out.p = U * ep;
  return out;
}

PhaseState heisenberg_flow(const PhaseState& s, double t, const MagneticSystem& sys) {
  Vec c = chart_of(s.q);
  const double x0 = c[0], y0 = c[1], z0 = c[2];
  const double pa0 = s.p[0], pb0 = s.p[1], pg = s.p[2];
  const double mu = 1.0 + pg;
  const double mt = mu * t;
  const double cmt = std::cos(mt), smt = std::sin(mt);
  const double pa = pa0 * cmt - pb0 * smt;
  const double pb = pa0 * smt + pb0 * cmt;
  // x - x0 = (pb(t) - pb0)/mu and y - y0 = -(pa(t) - pa0)/mu, in stable form.
  const double dx = t * (pa0 * sinc(mt) + pb0 * cosm1_over(mt));
  const double dy = -t * (pa0 * cosm1_over(mt) - pb0 * sinc(mt));
  // integral of p_beta
  const double ipb = t * (-pa0 * cosm1_over(mt) + pb0 * sinc(mt));
  // integral of (x - x0 + x0) p_beta assembled from stable kernels
  const double j1 = 2.0 * pa0 * pa0 * mu * t * t * t * sinc1(2.0 * mt);
  const double j2 = -2.0 * pa0 * pb0 * t * t * cosm1_over2(2.0 * mt);
  const double j3 = pa0 * pb0 * t * t * cosm1_over2(mt);
  const double j4 = pb0 * pb0 * mu * t * t * t * (sinc1(mt) - 2.0 * sinc1(2.0 * mt));
  const double z = z0 + pg * t + x0 * ipb + j1 + j2 + j3 + j4;
  Vec chart(3);
  chart << x0 + dx, y0 + dy, z;
  PhaseState out;
  out.q = element_from_chart(sys, chart);
  out.p = Vec(3);
  out.p << pa, pb, pg;
  return out;
}

PhaseState psl2_flow(const PhaseState& s, double t, const MagneticSystem&) {
  const double pa0 = s.p[0], pb0 = s.p[1], C = s.p[2];
  const double mu = -1.0 - 2.0 * C;
  // d = A cos(phi0) X + A sin(phi0) Y + (C + mu) V in the constant frame
  Eigen::Matrix2d d = sl2_from_frame(Eigen::Vector3d(pa0, pb0, C + mu));
  Eigen::Matrix2d h = exp_sl2(Eigen::Matrix2d(t * d));
  Eigen::Matrix2d qstar = exp_sl2(Eigen::Matrix2d(-t * mu * sl2_basis_V()));
  PhaseState out;
  out.q.family = Family::PSL2R;
  out.q.m = s.q.m * h * qstar;
  const double cmt = std::cos(mu * t), smt = std::sin(mu * t);
  out.p = Vec(3);
  out.p << pa0 * cmt - pb0 * smt, pa0 * smt + pb0 * cmt, C;
  return out;
}

}  // namespace

PhaseState closed_form_flow(const PhaseState& s, double t, const MagneticSystem& sys) {
  switch (sys.family) {
    case Family::TorusN: return torus_flow(s, t, sys);
    case Family::Heisenberg: return heisenberg_flow(s, t, sys);
    case Family::PSL2R: return psl2_flow(s, t, sys);
    case Family::Sol:
    case Family::Nil4:
      throw UnsupportedSystem("closed_form_flow: " + family_name(sys.family) +
                              " has no closed-form flow (numerical integration only)");
  }
  throw UnsupportedSystem("closed_form_flow");
}

double state_distance(const PhaseState& a, const PhaseState& b) {
  double dp = (a.p - b.p).cwiseAbs().maxCoeff();
  if (a.q.family == Family::PSL2R) {
    const double d1 = (a.q.m - b.q.m).cwiseAbs().maxCoeff();
    const double d2 = (a.q.m + b.q.m).cwiseAbs().maxCoeff();
    return std::max(dp, std::min(d1, d2));
  }
  return std::max(dp, (a.q.m - b.q.m).cwiseAbs().maxCoeff());
}

// --- forms -------------------------------------------------------------------

std::string form_name(OneFormId id) {
  switch (id) {
    case OneFormId::Psi: return "psi";
    case OneFormId::Gamma: return "gamma";
    case OneFormId::DeltaPsl2: return "delta";
    case OneFormId::PhiHeis: return "phi";
    case OneFormId::PhiPsl2: return "phi";
    case OneFormId::LambdaTorus: return "lambda_torus";
    case OneFormId::LambdaSol: return "lambda_sol";
    case OneFormId::BetaTorus: return "beta";
    case OneFormId::Zero: return "zero";
  }
  return "?";
}

bool form_valid_for(OneFormId id, Family f) {
  switch (id) {
    case OneFormId::Psi:
    case OneFormId::Gamma:
      return f == Family::Heisenberg || f == Family::PSL2R;
    case OneFormId::DeltaPsl2:
    case OneFormId::PhiPsl2:
      return f == Family::PSL2R;
    case OneFormId::PhiHeis:
      return f == Family::Heisenberg;
    case OneFormId::LambdaTorus:
    case OneFormId::BetaTorus:
      return f == Family::TorusN;
    case OneFormId::LambdaSol:
      return f == Family::Sol;
    case OneFormId::Zero:
      return true;
  }
  return false;
}

double form_value(OneFormId id, const MagneticSystem& sys, const PhaseState& s,
                  const Vec& chart_vel, const Vec& p_vel) {
  if (!form_valid_for(id, sys.family))
    throw InvalidForm("form " + form_name(id) + " is not defined on " +
                      family_name(sys.family));
  switch (id) {
    case OneFormId::Psi: {
      Vec ch = chart_of(s.q);
      Vec f = coframe_eval(sys, ch, chart_vel);
      return s.p.dot(f) + f[2];  // nu + tau* gamma in the coframe
    }
    case OneFormId::Gamma: {
      Vec ch = chart_of(s.q);
      return coframe_eval(sys, ch, chart_vel)[2];
    }
    case OneFormId::DeltaPsl2: {
      Vec ch = chart_of(s.q);
      return chart_vel[0] / ch[1] + 0.5 * chart_vel[2];
    }
    case OneFormId::PhiHeis: {
      const double n2 = s.p[0] * s.p[0] + s.p[1] * s.p[1];
      return (s.p[0] * p_vel[1] - s.p[1] * p_vel[0]) / n2;
    }
    case OneFormId::PhiPsl2: {
      const double n2 = s.p[0] * s.p[0] + s.p[1] * s.p[1];
      return (-s.p[0] * p_vel[1] + s.p[1] * p_vel[0]) / n2;
    }
    case OneFormId::LambdaTorus: {
      return (sys.P1 * s.p).dot(chart_vel) +
             0.5 * (sys.P2 * s.p).dot(sys.Ainv * (sys.P2 * p_vel));
    }
    case OneFormId::LambdaSol: {
      Vec ch = chart_of(s.q);
      const double f = s.p[2] + s.p[0] * s.p[1];
      return f * chart_vel[2] + 0.5 * (s.p[0] * p_vel[1] - s.p[1] * p_vel[0]);
    }
    case OneFormId::BetaTorus:
      return 0.5 * Vec(s.q.m.col(0)).dot(sys.J * chart_vel);
    case OneFormId::Zero:
      return 0.0;
  }
  throw InvalidForm("form_value");
}

double form_pairing(OneFormId id, const PhaseState& s, const MagneticSystem& sys) {
  PhaseVelocity v = vector_field(s, sys);
  return form_value(id, sys, s, v.chart_vel, v.p_vel);
}

// --- curves ------------------------------------------------------------------

void CurveSamples::validate() const {
  if (times.size() != points.size() || times.size() != velocities.size())
    throw DimensionMismatch("CurveSamples: ragged sample arrays");
  if (segments() < 8) throw PreconditionFailed("CurveSamples: need N >= 8 nodes");
  for (size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw PreconditionFailed("CurveSamples: times must increase strictly");
  if ((points.front() - points.back()).cwiseAbs().maxCoeff() > 1e-9)
    throw PreconditionFailed("CurveSamples: curve is not closed");
}

namespace {
double action_integrand(const MagneticSystem& sys, double k, OneFormId theta,
                        const Vec& q, const Vec& v) {
  double th = 0.0;
  switch (theta) {
    case OneFormId::Gamma:
      th = coframe_eval(sys, q, v)[2];
      break;
    case OneFormId::DeltaPsl2:
      th = v[0] / q[1] + 0.5 * v[2];
      break;
    case OneFormId::BetaTorus:
      th = 0.5 * q.dot(sys.J * v);
      break;
    case OneFormId::Zero:
      break;
    default:
      throw InvalidForm("lagrangian_action: theta must be a configuration form");
  }
  return 0.5 * config_speed_sq(sys, q, v) + th + k;
}

double trapezoid_action(const CurveSamples& c, double k, OneFormId theta,
                        const MagneticSystem& sys, int stride) {
  double total = 0.0;
  const int n = c.segments();
  for (int i = 0; i + stride <= n; i += stride) {
    const double f0 = action_integrand(sys, k, theta, c.points[i], c.velocities[i]);
    const double f1 = action_integrand(sys, k, theta, c.points[i + stride],
                                       c.velocities[i + stride]);
    total += 0.5 * (f0 + f1) * (c.times[i + stride] - c.times[i]);
  }
  return total;
}
}  // namespace

QuadratureResult lagrangian_action(const CurveSamples& curve, double k,
                                   OneFormId theta, const MagneticSystem& sys) {
  curve.validate();
  if (!(curve.times.back() > curve.times.front()))
    throw PreconditionFailed("lagrangian_action: degenerate time interval");
  QuadratureResult r;
  r.value = trapezoid_action(curve, k, theta, sys, 1);
  if (curve.segments() % 2 == 0) {
    const double coarse = trapezoid_action(curve, k, theta, sys, 2);
    r.error_estimate = std::abs(r.value - coarse) / 3.0;  // order-2 Richardson
  } else {
    r.error_estimate = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

CurveSamples psl2_circle_curve(double k, double r, int n) {
  if (!(k > 0.0) || r < 0.0) throw PreconditionFailed("psl2_circle_curve: need k > 0, r >= 0");
  CurveSamples c;
  const double sr = std::sinh(r), cr = std::cosh(r);
  const double speed = std::sqrt(2.0 * k);
  const double T = 2.0 * kPi * sr / speed;
  c.times.resize(n + 1);
  c.points.resize(n + 1);
  c.velocities.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double t = T * i / n;
    // phi(t) = 2 atan(e^r tan(u)), u = speed * t / (2 sinh r), unwrapped over
    // the half-period jumps of tan.
    const double u = 0.5 * speed * t / sr;
    const double wind = std::floor((u + 0.5 * kPi) / kPi);
    const double ured = u - wind * kPi;
    const double phi = 2.0 * (std::atan(std::exp(r) * std::tan(ured)) + wind * kPi);
    const double x = sr * std::sin(phi);
    const double y = cr + sr * std::cos(phi);
    const double phidot = y * speed / sr;
    Vec q(3), v(3);
    q << x / std::sqrt(2.0), y, 0.0;
    v << sr * std::cos(phi) * phidot / std::sqrt(2.0), -sr * std::sin(phi) * phidot, 0.0;
    c.times[i] = t;
    c.points[i] = q;
    c.velocities[i] = v;
  }
  c.points[n] = c.points[0];  // close exactly
  c.velocities[n] = c.velocities[0];
  return c;
}

CurveSamples torus_circle_curve(const MagneticSystem& sys, double R,
                                double speed, int orientation, int n) {
  if (sys.family != Family::TorusN || sys.dim < 2)
    throw UnsupportedSystem("torus_circle_curve");
  CurveSamples c;
  const double T = 2.0 * kPi * R / speed;
  const double sgn = orientation >= 0 ? 1.0 : -1.0;
  c.times.resize(n + 1);
  c.points.resize(n + 1);
  c.velocities.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double t = T * i / n;
    const double a = sgn * speed * t / R;
    Vec q = Vec::Zero(sys.dim), v = Vec::Zero(sys.dim);
    q[0] = R * std::cos(a);
    q[1] = R * std::sin(a);
    v[0] = -sgn * speed * std::sin(a);
    v[1] = sgn * speed * std::cos(a);
    c.times[i] = t;
    c.points[i] = q;
    c.velocities[i] = v;
  }
  c.points[n] = c.points[0];
  c.velocities[n] = c.velocities[0];
  return c;
}

CurveSamples constant_curve(const MagneticSystem& sys, const Vec& q,
                            double duration, int n) {
  CurveSamples c;
  c.times.resize(n + 1);
  c.points.assign(n + 1, q);
  c.velocities.assign(n + 1, Vec::Zero(sys.config_dim()));
  for (int i = 0; i <= n; ++i) c.times[i] = duration * i / n;
  return c;
}

}  // namespace magshell
