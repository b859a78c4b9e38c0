#include "magshell/rabinowitz.hpp"

#include <Eigen/Sparse>
#include <cmath>
#include <random>

#include "magshell/errors.hpp"

namespace magshell {

namespace {

// Derivatives of Hbar = H - k in the canonical chart.
struct ChartH {
  double value = 0.0;
  Vec gq, gp;
  Mat hqq, hqp, hpp;  // hqp(a,b) = d^2 H / dq_a dp_b
};

ChartH chart_hamiltonian(const MagneticSystem& sys, const Vec& q, const Vec& p,
                         double k, bool second) {
  const int d = sys.config_dim();
  ChartH out;
  out.gq = Vec::Zero(d);
  out.gp = Vec::Zero(d);
  if (second) {
    out.hqq = Mat::Zero(d, d);
    out.hqp = Mat::Zero(d, d);
    out.hpp = Mat::Zero(d, d);
  }
  switch (sys.family) {
    case Family::TorusN: {
      out.value = 0.5 * p.squaredNorm() - k;
      out.gp = p;
      if (second) out.hpp = Mat::Identity(d, d);
      return out;
    }
    case Family::Heisenberg: {
      const double x = q[0], px = p[0], py = p[1], pz = p[2];
      const double u = py + x * pz;
      out.value = 0.5 * (px * px + u * u + pz * pz) - k;
      out.gq << u * pz, 0.0, 0.0;
      out.gp << px, u, x * u + pz;
      if (second) {
        out.hqq(0, 0) = pz * pz;
        out.hqp(0, 1) = pz;
        out.hqp(0, 2) = u + x * pz;
        out.hpp << 1, 0, 0, 0, 1, x, 0, x, 1 + x * x;
      }
      return out;
    }
    case Family::PSL2R: {
      const double y = q[1], px = p[0], py = p[1], pt = p[2];
      if (!(y > 0.0)) throw PreconditionFailed("psl2 loop crossed y <= 0");
      const double w = y * px - pt;
      out.value = 0.5 * (w * w + y * y * py * py + pt * pt) - k;
      out.gq << 0.0, w * px + y * py * py, 0.0;
      out.gp << w * y, y * y * py, -w + pt;
      if (second) {
        out.hqq(1, 1) = px * px + py * py;
        out.hqp(1, 0) = w + y * px;
        out.hqp(1, 1) = 2.0 * y * py;
        out.hqp(1, 2) = -px;
        out.hpp << y * y, 0, -y, 0, y * y, 0, -y, 0, 2;
      }
      return out;
    }
    case Family::Sol: {
      const double u = q[2], p0 = p[0], p1 = p[1], pu = p[2];
      const double e2 = std::exp(2.0 * u), em2 = std::exp(-2.0 * u);
      out.value = 0.5 * (e2 * p0 * p0 + em2 * p1 * p1 + pu * pu) - k;
      out.gq << 0.0, 0.0, e2 * p0 * p0 - em2 * p1 * p1;
      out.gp << e2 * p0, em2 * p1, pu;
      if (second) {
        out.hqq(2, 2) = 2.0 * (e2 * p0 * p0 + em2 * p1 * p1);
        out.hqp(2, 0) = 2.0 * e2 * p0;
        out.hqp(2, 1) = -2.0 * em2 * p1;
        out.hpp << e2, 0, 0, 0, em2, 0, 0, 0, 1;
      }
      return out;
    }
    case Family::Nil4:
      throw UnsupportedSystem("rabinowitz: nil4 has no configuration chart");
  }
  throw UnsupportedSystem("chart_hamiltonian");
}

// Coefficient vector of the sigma-primitive part of the omega-primitive in
// the canonical chart, its Jacobian, and the curvature contraction
// T(q, v)_{ab} = sum_m d^2 theta_m / dq_a dq_b * v_m.
Vec theta_cov(const MagneticSystem& sys, const Vec& q) {
  switch (sys.family) {
    case Family::TorusN: return Vec(-0.5 * (sys.J * q));
    case Family::Heisenberg: {
      Vec t(3);
      t << 0.0, -q[0], 1.0;
      return t;
    }
    case Family::PSL2R: {
      Vec t(3);
      t << 1.0 / q[1], 0.0, 1.0;
      return t;
    }
    case Family::Sol: {
      Vec t(3);
      t << 0.0, -q[0], 0.0;
      return t;
    }
    case Family::Nil4: break;
  }
  throw UnsupportedSystem("theta_cov");
}

Mat theta_jac(const MagneticSystem& sys, const Vec& q) {
  const int d = sys.config_dim();
  Mat jac = Mat::Zero(d, d);
  switch (sys.family) {
    case Family::TorusN: jac = -0.5 * sys.J; break;
    case Family::Heisenberg: jac(1, 0) = -1.0; break;
    case Family::PSL2R: jac(0, 1) = -1.0 / (q[1] * q[1]); break;
    case Family::Sol: jac(1, 0) = -1.0; break;
    case Family::Nil4: throw UnsupportedSystem("theta_jac");
  }
  return jac;
}

Mat theta_curvature(const MagneticSystem& sys, const Vec& q, const Vec& v) {
  const int d = sys.config_dim();
  Mat t = Mat::Zero(d, d);
  if (sys.family == Family::PSL2R) t(1, 1) = 2.0 * v[0] / (q[1] * q[1] * q[1]);
  return t;
}

// 4th-order cyclic central difference of the node sequence (columns of m),
// scaled so that (D m)_i approximates the t-derivative on [0, 1].
Mat dloop(const Mat& m) {
  const int N = static_cast<int>(m.cols());
  const double nn = static_cast<double>(N);
  Mat out(m.rows(), N);
  for (int i = 0; i < N; ++i) {
    const int ip = (i + 1) % N, ipp = (i + 2) % N;
    const int im = (i + N - 1) % N, imm = (i + N - 2) % N;
    out.col(i) =
        (8.0 * (m.col(ip) - m.col(im)) - (m.col(ipp) - m.col(imm))) * (nn / 12.0);
  }
  return out;
}

// Stencil weights of dloop as (offset, coefficient) pairs.
struct Stencil {
  int offset;
  double w;
};
std::array<Stencil, 4> dloop_stencil(int N) {
  const double nn = static_cast<double>(N);
  return {{{1, 8.0 * nn / 12.0},
           {-1, -8.0 * nn / 12.0},
           {2, -nn / 12.0},
           {-2, nn / 12.0}}};
}

}  // namespace

void DiscreteLoop::validate(const MagneticSystem& sys) const {
  if (N < 16) throw PreconditionFailed("DiscreteLoop: need N >= 16");
  if (q.cols() != N || p.cols() != N || q.rows() != sys.config_dim() ||
      p.rows() != sys.config_dim())
    throw DimensionMismatch("DiscreteLoop: node array shape");
  if (!q.allFinite() || !p.allFinite() || !std::isfinite(eta))
    throw PreconditionFailed("DiscreteLoop: non-finite data");
  if (sys.family == Family::PSL2R && q.row(1).minCoeff() <= 0.0)
    throw PreconditionFailed("DiscreteLoop: psl2 loop must stay in y > 0");
}

double action(const DiscreteLoop& loop, const MagneticSystem& sys) {
  loop.validate(sys);
  const int N = loop.N;
  Mat dq = dloop(loop.q);
  double primitive = 0.0, constraint = 0.0;
  for (int i = 0; i < N; ++i) {
    primitive += (loop.p.col(i) + theta_cov(sys, loop.q.col(i))).dot(dq.col(i));
    constraint += chart_hamiltonian(sys, loop.q.col(i), loop.p.col(i), loop.k, false).value;
  }
  return (primitive - loop.eta * constraint) / N;
}

LoopGradient gradient(const DiscreteLoop& loop, const MagneticSystem& sys) {
  loop.validate(sys);
  const int N = loop.N;
  const int d = sys.config_dim();
  const double invN = 1.0 / N;
  Mat dq = dloop(loop.q);
  Mat dp = dloop(loop.p);
  Mat theta(d, N);
  for (int i = 0; i < N; ++i) theta.col(i) = theta_cov(sys, loop.q.col(i));
  Mat dtheta = dloop(theta);

  LoopGradient g;
  g.dq = Mat::Zero(d, N);
  g.dp = Mat::Zero(d, N);
  double hsum = 0.0;
  for (int i = 0; i < N; ++i) {
    ChartH h = chart_hamiltonian(sys, loop.q.col(i), loop.p.col(i), loop.k, false);
    hsum += h.value;
    g.dp.col(i) = invN * (dq.col(i) - loop.eta * h.gp);
    g.dq.col(i) =
        invN * (-dp.col(i) - dtheta.col(i) +
                theta_jac(sys, loop.q.col(i)).transpose() * dq.col(i) -
                loop.eta * h.gq);
  }
  g.deta = -hsum * invN;
  return g;
}

namespace {

using Trip = Eigen::Triplet<double>;

// Assemble the Hessian of the discrete action at the current loop.
Eigen::SparseMatrix<double> hessian(const DiscreteLoop& loop,
                                    const MagneticSystem& sys) {
  const int N = loop.N;
  const int d = sys.config_dim();
  const double invN = 1.0 / N;
  const int dim = 2 * d * N + 1;
  const int eta_idx = dim - 1;
  auto qbase = [&](int i) { return 2 * d * i; };
  auto pbase = [&](int i) { return 2 * d * i + d; };

  Mat dq = dloop(loop.q);
  std::vector<Trip> trips;
  trips.reserve(static_cast<size_t>(N) * (8 * d + 6 * d * d + 4 * d));
  const auto stencil = dloop_stencil(N);

  std::vector<Mat> jtheta(N);
  for (int i = 0; i < N; ++i) jtheta[i] = theta_jac(sys, loop.q.col(i));

  for (int j = 0; j < N; ++j) {
    ChartH h = chart_hamiltonian(sys, loop.q.col(j), loop.p.col(j), loop.k, true);
    // difference-operator couplings
    for (const auto& st : stencil) {
      const int i = (j + st.offset + 2 * N) % N;
      const double Dji = st.w;  // D_{j,i}
      for (int a = 0; a < d; ++a) {
        // dGp_j / dq_i : (1/N) D_{ji} I
        trips.emplace_back(pbase(j) + a, qbase(i) + a, invN * Dji);
        // dGq_j / dp_i : -(1/N) D_{ji} I
        trips.emplace_back(qbase(j) + a, pbase(i) + a, -invN * Dji);
      }
      // dGq_j / dq_i : (1/N) D_{ji} (Jtheta_j^T - Jtheta_i)
      Mat blk = invN * Dji * (jtheta[j].transpose() - jtheta[i]);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          if (blk(a, b) != 0.0)
            trips.emplace_back(qbase(j) + a, qbase(i) + b, blk(a, b));
    }
    // node-diagonal blocks
    Mat qq = invN * theta_curvature(sys, loop.q.col(j), dq.col(j)) -
             (loop.eta * invN) * h.hqq;
    Mat qp = -(loop.eta * invN) * h.hqp;        // dGq/dp at the node
    Mat pp = -(loop.eta * invN) * h.hpp;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        if (qq(a, b) != 0.0) trips.emplace_back(qbase(j) + a, qbase(j) + b, qq(a, b));
        if (qp(a, b) != 0.0) {
          trips.emplace_back(qbase(j) + a, pbase(j) + b, qp(a, b));
          trips.emplace_back(pbase(j) + b, qbase(j) + a, qp(a, b));
        }
        if (pp(a, b) != 0.0) trips.emplace_back(pbase(j) + a, pbase(j) + b, pp(a, b));
      }
    // eta couplings
    for (int a = 0; a < d; ++a) {
      if (h.gq[a] != 0.0) {
        trips.emplace_back(qbase(j) + a, eta_idx, -invN * h.gq[a]);
        trips.emplace_back(eta_idx, qbase(j) + a, -invN * h.gq[a]);
      }
      if (h.gp[a] != 0.0) {
        trips.emplace_back(pbase(j) + a, eta_idx, -invN * h.gp[a]);
        trips.emplace_back(eta_idx, pbase(j) + a, -invN * h.gp[a]);
      }
    }
  }
  Eigen::SparseMatrix<double> H(dim, dim);
  H.setFromTriplets(trips.begin(), trips.end());
  return H;
}

Vec flatten_gradient(const LoopGradient& g, int d, int N) {
  Vec f(2 * d * N + 1);
  for (int i = 0; i < N; ++i) {
    f.segment(2 * d * i, d) = g.dq.col(i);
    f.segment(2 * d * i + d, d) = g.dp.col(i);
  }
  f[2 * d * N] = g.deta;
  return f;
}

DiscreteLoop apply_step(const DiscreteLoop& loop, const Vec& step, int d) {
  DiscreteLoop out = loop;
  for (int i = 0; i < loop.N; ++i) {
    out.q.col(i) += step.segment(2 * d * i, d);
    out.p.col(i) += step.segment(2 * d * i + d, d);
  }
  out.eta += step[2 * d * loop.N];
  return out;
}

double mean_abs_hbar(const DiscreteLoop& loop, const MagneticSystem& sys) {
  double s = 0.0;
  for (int i = 0; i < loop.N; ++i)
    s += std::abs(
        chart_hamiltonian(sys, loop.q.col(i), loop.p.col(i), loop.k, false).value);
  return s / loop.N;
}

std::optional<OrbitMatch> match_orbit(const DiscreteLoop& loop,
                                      const MagneticSystem& sys, int l_max) {
  double kbar = 0.0, cbar = 0.0;
  for (int i = 0; i < loop.N; ++i) {
    kbar += chart_hamiltonian(sys, loop.q.col(i), loop.p.col(i), 0.0, false).value;
    if (sys.family == Family::Heisenberg || sys.family == Family::PSL2R)
      cbar += loop.p(2, i);
  }
  kbar /= loop.N;
  cbar /= loop.N;
  std::vector<ClosedOrbitRecord> recs;
  try {
    recs = contractible_orbits(sys, loop.k, l_max);
  } catch (const Error&) {
    return std::nullopt;
  }
  for (const auto& rec : recs) {
    const bool c_ok = sys.family == Family::TorusN ||
                      std::abs(cbar - rec.C) < 1e-3 * (1.0 + std::abs(rec.C));
    if (c_ok && std::abs(std::abs(loop.eta) - rec.T) < 1e-3 * rec.T &&
        std::abs(kbar - loop.k) < 1e-4 * (1.0 + loop.k)) {
      OrbitMatch m;
      m.C = rec.C;
      m.l = rec.l;
      m.T = rec.T;
      m.omega = rec.omega;
      return m;
    }
  }
  return std::nullopt;
}

}  // namespace

CriticalPointResult find_critical(const DiscreteLoop& seed,
                                  const MagneticSystem& sys,
                                  const SolveOptions& opt) {
  seed.validate(sys);
  const int d = sys.config_dim();
  const int N = seed.N;
  const int dim = 2 * d * N + 1;

  DiscreteLoop cur = seed;
  const double escape_level = 10.0 * std::max(1.0, mean_abs_hbar(seed, sys));
  LoopGradient g = gradient(cur, sys);
  Vec f = flatten_gradient(g, d, N);
  auto residual = [&](const Vec& fv) {
    return std::max(static_cast<double>(N) * fv.head(dim - 1).cwiseAbs().maxCoeff(),
                    std::abs(fv[dim - 1]));
  };

  Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    const double res = residual(f);
    if (res < opt.tol) break;
    if (mean_abs_hbar(cur, sys) > escape_level)
      throw EscapedShell("rabinowitz solver: |Hbar| grew beyond the escape level");

    Eigen::SparseMatrix<double> H = hessian(cur, sys);
    // Tiny diagonal shift: the symmetry directions of the action (time
    // shift, torus translations) make the exact Hessian singular.
    const double mu = 1e-10 * (1.0 + f.cwiseAbs().maxCoeff());
    Eigen::SparseMatrix<double> reg(dim, dim);
    reg.setIdentity();
    H += mu * reg;
    solver.compute(H);
    if (solver.info() != Eigen::Success)
      throw NoConvergence("rabinowitz solver: sparse factorization failed");
    Vec step = solver.solve(-f);
    if (solver.info() != Eigen::Success || !step.allFinite())
      throw NoConvergence("rabinowitz solver: linear solve failed");

    // Backtracking on the gradient norm; PSL2 steps must keep y > 0.
    double t = 1.0;
    bool accepted = false;
    const double fnorm = f.norm();
    for (int bt = 0; bt < 18; ++bt, t *= 0.5) {
      DiscreteLoop trial = apply_step(cur, Vec(t * step), d);
      if (sys.family == Family::PSL2R && trial.q.row(1).minCoeff() <= 0.0) continue;
      LoopGradient gt;
      try {
        gt = gradient(trial, sys);
      } catch (const Error&) {
        continue;
      }
      Vec ft = flatten_gradient(gt, d, N);
      if (ft.norm() < (1.0 - 1e-4 * t) * fnorm) {
        cur = std::move(trial);
        g = std::move(gt);
        f = std::move(ft);
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw NoConvergence("rabinowitz solver: line search stalled at residual " +
                          std::to_string(res));
  }
  if (residual(f) >= opt.tol)
    throw NoConvergence("rabinowitz solver: iteration cap reached at residual " +
                        std::to_string(residual(f)));

  CriticalPointResult out;
  out.loop = cur;
  out.eta = cur.eta;
  out.action_value = action(cur, sys);
  out.loop_residual = static_cast<double>(N) * f.head(dim - 1).cwiseAbs().maxCoeff();
  out.constraint_residual = std::abs(f[dim - 1]);
  // deta = -mean(Hbar), so the primitive part is A + eta * mean(Hbar).
  out.omega = out.action_value - cur.eta * f[dim - 1];
  out.iterations = iter;
  out.matched = match_orbit(cur, sys, opt.match_l_max);
  return out;
}

PeriodActionReport period_action_check(const CriticalPointResult& result,
                                       const MagneticSystem& sys,
                                       const StabilizingFormRecipe* recipe) {
  PeriodActionReport rep;
  rep.eta = result.eta;
  rep.omega = result.omega;
  if (recipe == nullptr) return rep;

  const DiscreteLoop& loop = result.loop;
  const int N = loop.N;
  Mat dq = dloop(loop.q);
  Mat pframe(sys.dim, N);
  for (int i = 0; i < N; ++i)
    pframe.col(i) = frame_from_canonical(sys, loop.q.col(i), loop.p.col(i));
  Mat dpframe = dloop(pframe);
  double lam = 0.0;
  for (int i = 0; i < N; ++i) {
    PhaseState s = make_state(sys, loop.q.col(i), pframe.col(i));
    lam += lambda_value(*recipe, sys, s, dq.col(i), dpframe.col(i));
  }
  rep.lambda_period = lam / N;
  rep.tame_ratio = rep.omega != 0.0 ? rep.lambda_period / std::abs(rep.omega) : 0.0;
  return rep;
}

DiscreteLoop loop_from_orbit(const MagneticSystem& sys, const ClosedOrbitRecord& rec,
                             int N, int direction, double noise, uint64_t seed) {
  DiscreteLoop loop;
  loop.N = N;
  loop.k = rec.k;
  loop.eta = direction * rec.T;
  const int d = sys.config_dim();
  loop.q = Mat::Zero(d, N);
  loop.p = Mat::Zero(d, N);
  PhaseState s0 = rec.representative(sys);
  for (int i = 0; i < N; ++i) {
    const double t = direction * rec.T * i / N;
    PhaseState s = closed_form_flow(s0, t, sys);
    Vec ch = chart_of(s.q);
    loop.q.col(i) = ch;
    loop.p.col(i) = canonical_from_frame(sys, ch, s.p);
  }
  if (noise > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double qs = std::max(1e-12, (loop.q.rowwise().maxCoeff() -
                                       loop.q.rowwise().minCoeff()).maxCoeff());
    const double ps = std::max(1e-12, (loop.p.rowwise().maxCoeff() -
                                       loop.p.rowwise().minCoeff()).maxCoeff());
    for (int i = 0; i < N; ++i)
      for (int a = 0; a < d; ++a) {
        loop.q(a, i) += noise * qs * gauss(rng);
        loop.p(a, i) += noise * ps * gauss(rng);
      }
    if (sys.family == Family::PSL2R)
      loop.q.row(1) = loop.q.row(1).cwiseMax(1e-3);
  }
  return loop;
}

DiscreteLoop constant_loop(const MagneticSystem& sys, const Vec& chart,
                           const Vec& p_frame, int N, double eta, double k) {
  DiscreteLoop loop;
  loop.N = N;
  loop.k = k;
  loop.eta = eta;
  const int d = sys.config_dim();
  Vec pc = canonical_from_frame(sys, chart, p_frame);
  loop.q = chart.replicate(1, N);
  loop.p = pc.replicate(1, N);
  return loop;
}

HoferBound torus_displacing_hofer_norm(const MagneticSystem& sys, double k) {
  if (sys.family != Family::TorusN)
    throw UnsupportedSystem("torus_displacing_hofer_norm");
  const double b = std::sqrt(2.0 * k);
  HoferBound out;
  out.translation_scale = 2.0 * b + 1.0;  // |Ja| must exceed the shell diameter
  out.support_radius = b + out.translation_scale + 1.0;
  // cutoff chi(|p|): 1 inside radius R1, cubic-bump rolloff over one unit
  const double R1 = b + out.translation_scale;
  double maxval = 0.0;
  for (int i = 0; i <= 20000; ++i) {
    const double rho = out.support_radius * i / 20000.0;
    double chi = 1.0;
    if (rho > R1) {
      const double u = rho - R1;  // in (0, 1]
      const double a = 1.0 - u * u;
      chi = a > 0.0 ? a * a * a : 0.0;
    }
    maxval = std::max(maxval, chi * out.translation_scale * rho);
  }
  out.norm = 2.0 * maxval;  // (max - min) of the time-independent cutoff
  return out;
}

}  // namespace magshell
