#include "paraopt/precond.hpp"

#include <cmath>
#include <sstream>

#include "paraopt/parallel.hpp"

namespace paraopt {

CirculantSpectrum circulant_spectrum(int L, Complex alpha) {
  if (L < 1) throw std::invalid_argument("circulant_spectrum: L must be >= 1");
  if (std::abs(std::abs(alpha) - 1.0) > 1e-14)
    throw std::invalid_argument(
        "circulant_spectrum: |alpha| must be 1 (simultaneous diagonalization of C and C*)");

  CirculantSpectrum s;
  s.alpha = alpha;
  s.L = L;
  s.gamma_factors.resize(L);
  const double phase = std::arg(alpha);
  for (int l = 0; l < L; ++l)
    s.gamma_factors[l] = std::polar(1.0, phase * static_cast<double>(l) / L);

  // First column of C(alpha): the subdiagonal one, except that for L = 1 the
  // wrap-around entry alpha is the whole matrix.
  ComplexVec c1 = ComplexVec::Zero(L);
  if (L == 1)
    c1[0] = alpha;
  else
    c1[1] = 1.0;
  const ComplexVec scaled = s.gamma_factors.cwiseProduct(c1);
  s.d = std::sqrt(static_cast<double>(L)) * dft(scaled);
  return s;
}

std::pair<RealVec, RealVec> averages(const ShootingState& s) {
  const int L = s.num_intervals();
  if (L < 1) throw std::invalid_argument("averages: empty shooting state");
  RealVec y = RealVec::Zero(s.dim());
  RealVec lam = RealVec::Zero(s.dim());
  for (int b = 0; b < L; ++b) {
    y += s.Y[b];
    lam += s.Lam[b];
  }
  y /= static_cast<double>(L);
  lam /= static_cast<double>(L);
  return {std::move(y), std::move(lam)};
}

AveragedContext build_averaged_context(const ControlProblem& p, const ShootingState& s,
                                       int coarse_steps, const BvpOptions& bvp,
                                       SolveLedger* ledger) {
  auto [y_av, lam_av] = averages(s);
  const double dT = p.T / s.num_intervals();
  BvpResult r = solve_bvp_nonlinear(p, y_av, lam_av, 0.0, dT, coarse_steps, bvp);
  if (ledger) ledger->add_coarse_nonlinear_all();
  AveragedContext ctx;
  ctx.Y_av = std::move(y_av);
  ctx.Lam_av = std::move(lam_av);
  ctx.traj = std::move(r.traj);
  return ctx;
}

namespace {

void check_inner(const InnerSystem& sys) {
  if (!sys.problem || !sys.traj)
    throw std::invalid_argument("inner system is missing its problem or trajectory");
  if (std::abs(std::abs(sys.d) - 1.0) > 1e-8)
    throw std::invalid_argument("inner system requires |d| = 1");
}

InnerSolution adjusted_with(const DerivativeSolver& solver, Complex d, const ComplexVec& dp,
                            const ComplexVec& dq, SolveLedger* ledger, int interval) {
  const Complex c = std::polar(1.0, 0.5 * std::arg(d));
  const ComplexVec a = dp / c;
  const ComplexVec b = c * dq;
  const DerivEndpoints ep = solver.solve(a, b, ledger, interval);
  InnerSolution out;
  out.dy = -(ep.z_a / c);
  out.dlam = -(c * ep.mu_b);
  return out;
}

InnerSolution gmres_with(const DerivativeSolver& solver, Complex d, const ComplexVec& dp,
                         const ComplexVec& dq, double tol, int maxit, SolveLedger* ledger,
                         int interval) {
  const Eigen::Index n = dp.size();
  const ComplexVec zero = ComplexVec::Zero(n);
  const LinearMap m{
      2 * n, 2 * n, [&](const ComplexVec& x) -> ComplexVec {
        const ComplexVec u = x.head(n);
        const ComplexVec w = x.tail(n);
        const DerivEndpoints e1 = solver.solve(u, zero, ledger, interval);
        const DerivEndpoints e2 = solver.solve(zero, w, ledger, interval);
        ComplexVec out(2 * n);
        out.head(n) = u - d * e1.z_b - e2.z_b;
        out.tail(n) = w - e1.mu_a - std::conj(d) * e2.mu_a;
        return out;
      }};
  ComplexVec rhs(2 * n);
  rhs << dp, dq;
  if (maxit <= 0) maxit = 4 * static_cast<int>(n) + 20;
  const GmresResult r = gmres(m, rhs, tol, maxit);
  InnerSolution out;
  out.dy = r.x.head(n);
  out.dlam = r.x.tail(n);
  out.converged = r.converged;
  out.iters = r.iters;
  return out;
}

ComplexMat build_inner_matrix(const PropagatorDerivs& blocks, Complex d, int n) {
  ComplexMat m(2 * n, 2 * n);
  m.topLeftCorner(n, n) = -d * blocks.P_y;
  m.topLeftCorner(n, n).diagonal().array() += 1.0;
  m.topRightCorner(n, n) = -blocks.P_lam;
  m.bottomLeftCorner(n, n) = -blocks.Q_y;
  m.bottomRightCorner(n, n) = -std::conj(d) * blocks.Q_lam;
  m.bottomRightCorner(n, n).diagonal().array() += 1.0;
  return m;
}

}  // namespace

InnerSolution inner_solve_adjusted_bc(const InnerSystem& sys, const ComplexVec& dp,
                                      const ComplexVec& dq, SolveLedger* ledger,
                                      int interval) {
  check_inner(sys);
  const Complex d = sys.d;
  const DerivativeSolver solver(*sys.problem, *sys.traj, -std::conj(d), 1.0, 1.0, -d);
  return adjusted_with(solver, d, dp, dq, ledger, interval);
}

InnerSolution inner_solve_gmres(const InnerSystem& sys, const ComplexVec& dp,
                                const ComplexVec& dq, double tol, SolveLedger* ledger,
                                int interval, int maxit) {
  check_inner(sys);
  if (tol <= 0.0) throw std::invalid_argument("inner_solve_gmres: tol must be positive");
  const DerivativeSolver solver(*sys.problem, *sys.traj, 1.0, 0.0, 0.0, 1.0);
  return gmres_with(solver, sys.d, dp, dq, tol, maxit, ledger, interval);
}

InnerSolution inner_solve_direct(const InnerSystem& sys, const ComplexVec& dp,
                                 const ComplexVec& dq, SolveLedger* ledger, int interval,
                                 int assembly_cap) {
  check_inner(sys);
  const int n = sys.problem->dim;
  if (n > assembly_cap)
    throw std::invalid_argument("inner_solve_direct: dimension exceeds the dense-assembly cap");
  const PropagatorDerivs blocks = assemble_propagator_derivs(*sys.problem, *sys.traj, ledger, interval);
  const ComplexMat m = build_inner_matrix(blocks, sys.d, n);
  ComplexVec rhs(2 * n);
  rhs << dp, dq;
  const ComplexVec x = dense_solve(m, rhs);
  InnerSolution out;
  out.dy = x.head(n);
  out.dlam = x.tail(n);
  return out;
}

DiagPreconditioner::DiagPreconditioner(const ControlProblem& p, AveragedContext ctx,
                                       CirculantSpectrum spec, InnerMethod method,
                                       double inner_tol, int direct_cap, SolveLedger* ledger)
    : problem_(p),
      ctx_(std::move(ctx)),
      spec_(std::move(spec)),
      method_(method),
      inner_tol_(inner_tol),
      ledger_(ledger) {
  const int L = spec_.L;
  const int n = problem_.dim;
  if (ledger_ && ledger_->num_intervals() != L)
    throw std::invalid_argument("DiagPreconditioner: ledger interval count mismatch");

  fourier_.resize(L, L);
  for (int k = 0; k < L; ++k) {
    ComplexVec e = ComplexVec::Zero(L);
    e[k] = 1.0;
    fourier_.col(k) = dft(e);
  }

  switch (method_) {
    case InnerMethod::AdjustedBC: {
      adjusted_.resize(L);
      parallel_for(L, [&](int jf) {
        const Complex d = spec_.d[jf];
        try {
          adjusted_[jf] = std::make_unique<DerivativeSolver>(problem_, ctx_.traj,
                                                             -std::conj(d), 1.0, 1.0, -d);
        } catch (const SingularSystemError& e) {
          std::ostringstream msg;
          msg << "inner system " << jf + 1 << ": " << e.what();
          throw InnerSolveError(msg.str());
        }
      });
      break;
    }
    case InnerMethod::InnerGmres:
      standard_ = std::make_unique<DerivativeSolver>(problem_, ctx_.traj, 1.0, 0.0, 0.0, 1.0);
      break;
    case InnerMethod::Direct: {
      if (n > direct_cap)
        throw std::invalid_argument(
            "DiagPreconditioner: dimension exceeds the dense-assembly cap");
      // The dense blocks are shared by all frequencies but every processor
      // would assemble its own copy, so the 2N solves are charged everywhere.
      const PropagatorDerivs blocks = assemble_propagator_derivs(problem_, ctx_.traj);
      if (ledger_) ledger_->add_coarse_linear_all(2 * n);
      direct_m_.reserve(L);
      for (int jf = 0; jf < L; ++jf)
        direct_m_.push_back(build_inner_matrix(blocks, spec_.d[jf], n));
      break;
    }
  }
}

InnerSolution DiagPreconditioner::solve_frequency(int jf, const ComplexVec& dp,
                                                  const ComplexVec& dq) const {
  const Complex d = spec_.d[jf];
  switch (method_) {
    case InnerMethod::AdjustedBC:
      return adjusted_with(*adjusted_[jf], d, dp, dq, ledger_, jf);
    case InnerMethod::InnerGmres:
      return gmres_with(*standard_, d, dp, dq, inner_tol_, 0, ledger_, jf);
    case InnerMethod::Direct: {
      const Eigen::Index n = dp.size();
      ComplexVec rhs(2 * n);
      rhs << dp, dq;
      const ComplexVec x = dense_solve(direct_m_[jf], rhs);
      InnerSolution out;
      out.dy = x.head(n);
      out.dlam = x.tail(n);
      return out;
    }
  }
  throw std::logic_error("unreachable inner method");
}

ComplexVec DiagPreconditioner::apply(const ComplexVec& v) const {
  const int L = spec_.L;
  const int n = problem_.dim;
  if (v.size() != dim()) throw std::invalid_argument("DiagPreconditioner: length mismatch");

  // Step (i): (F Gamma ox I) on both halves, blocks as matrix columns.
  ComplexMat xy(n, L), xl(n, L);
  for (int j = 0; j < L; ++j) {
    xy.col(j) = v.segment(j * n, n) * spec_.gamma_factors[j];
    xl.col(j) = v.segment((L + j) * n, n) * spec_.gamma_factors[j];
  }
  xy = xy * fourier_.transpose();
  xl = xl * fourier_.transpose();

  // Step (ii): the L decoupled frequency systems, concurrently.
  ComplexMat oy(n, L), ol(n, L);
  parallel_for(L, [&](int jf) {
    try {
      const InnerSolution s = solve_frequency(jf, xy.col(jf), xl.col(jf));
      if (!s.converged) {
        std::ostringstream msg;
        msg << "inner system " << jf + 1 << ": GMRES did not reach the inner tolerance";
        throw InnerSolveError(msg.str());
      }
      oy.col(jf) = s.dy;
      ol.col(jf) = s.dlam;
    } catch (const InnerSolveError&) {
      throw;
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "inner system " << jf + 1 << ": " << e.what();
      throw InnerSolveError(msg.str());
    }
  });

  // Step (iii): (Gamma^-1 F* ox I); with |alpha| = 1 the inverse scaling is
  // the conjugate.
  oy = oy * fourier_.conjugate();
  ol = ol * fourier_.conjugate();
  ComplexVec out(2 * static_cast<Eigen::Index>(L) * n);
  for (int j = 0; j < L; ++j) {
    out.segment(j * n, n) = oy.col(j) * std::conj(spec_.gamma_factors[j]);
    out.segment((L + j) * n, n) = ol.col(j) * std::conj(spec_.gamma_factors[j]);
  }
  return out;
}

ComplexVec precond_apply(const ControlProblem& p, const AveragedContext& ctx,
                         const CirculantSpectrum& spec, InnerMethod method,
                         const ComplexVec& v, double inner_tol, SolveLedger* ledger) {
  const DiagPreconditioner pre(p, ctx, spec, method, inner_tol, 512, ledger);
  return pre.apply(v);
}

PrecondFactory make_diag_precond_factory(const ControlProblem& p, int L,
                                         const PrecondOptions& opts) {
  const CirculantSpectrum spec = circulant_spectrum(L, opts.alpha);
  return [p, opts, spec](const ShootingState& state, SolveLedger& ledger) -> LinearMap {
    AveragedContext ctx = build_averaged_context(p, state, opts.coarse_steps, opts.bvp, &ledger);
    auto pre = std::make_shared<DiagPreconditioner>(p, std::move(ctx), spec, opts.method,
                                                    opts.inner_tol, opts.direct_cap, &ledger);
    return LinearMap{pre->dim(), pre->dim(),
                     [pre](const ComplexVec& v) { return pre->apply(v); }};
  };
}

}  // namespace paraopt
