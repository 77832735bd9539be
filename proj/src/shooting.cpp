#include "paraopt/shooting.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "paraopt/parallel.hpp"

namespace paraopt {

ComplexVec ShootingState::flatten() const {
  const int L = num_intervals();
  const int n = dim();
  ComplexVec v(2 * L * n);
  for (int b = 0; b < L; ++b) {
    v.segment(b * n, n) = Y[b].cast<Complex>();
    v.segment((L + b) * n, n) = Lam[b].cast<Complex>();
  }
  return v;
}

ShootingState ShootingState::from_vector(const ComplexVec& v, int L, int n) {
  if (v.size() != 2 * static_cast<Eigen::Index>(L) * n)
    throw std::invalid_argument("ShootingState: flattened length mismatch");
  ShootingState s;
  s.Y.resize(L);
  s.Lam.resize(L);
  for (int b = 0; b < L; ++b) {
    s.Y[b] = v.segment(b * n, n).real();
    s.Lam[b] = v.segment((L + b) * n, n).real();
  }
  return s;
}

std::vector<double> interface_times(double T, int L) {
  if (L < 1) throw std::invalid_argument("interface_times: L must be >= 1");
  std::vector<double> t(L + 1);
  for (int b = 0; b <= L; ++b) t[b] = T * static_cast<double>(b) / L;
  return t;
}

namespace {

void check_state(const ControlProblem& p, const ShootingState& s) {
  if (s.num_intervals() < 1) throw std::invalid_argument("shooting state is empty");
  if (s.Lam.size() != s.Y.size())
    throw std::invalid_argument("shooting state: Y/Lam block counts differ");
  if (s.dim() != p.dim) throw std::invalid_argument("shooting state dimension mismatch");
}

ComplexVec assemble_residual(const ControlProblem& p, const ShootingState& s, int steps,
                             const BvpOptions& bvp, SolveLedger* ledger, bool fine) {
  check_state(p, s);
  const int L = s.num_intervals();
  const int n = p.dim;
  const std::vector<double> t = interface_times(p.T, L);

  std::vector<RealVec> P_val(L), Q_val(L);
  parallel_for(L, [&](int b) {
    const RealVec& y_a = (b == 0) ? p.y_init : s.Y[b - 1];
    try {
      BvpResult r = solve_bvp_nonlinear(p, y_a, s.Lam[b], t[b], t[b + 1], steps, bvp);
      P_val[b] = std::move(r.P_val);
      Q_val[b] = std::move(r.Q_val);
    } catch (const BvpSolveError& e) {
      std::ostringstream msg;
      msg << (fine ? "fine" : "coarse") << " residual solve, subinterval " << b + 1 << ": "
          << e.what();
      throw BvpSolveError(msg.str(), e.last_residual());
    }
    if (ledger) {
      if (fine)
        ledger->add_fine(b);
      else
        ledger->add_coarse_nonlinear(b);
    }
  });

  ComplexVec f(2 * L * n);
  for (int b = 0; b < L; ++b) f.segment(b * n, n) = (s.Y[b] - P_val[b]).cast<Complex>();
  for (int b = 0; b + 1 < L; ++b)
    f.segment((L + b) * n, n) = (s.Lam[b] - Q_val[b + 1]).cast<Complex>();
  if (p.objective.kind == ObjectiveKind::FinalValue) {
    f.segment((2 * L - 1) * n, n) =
        (s.Lam[L - 1] - (s.Y[L - 1] - p.objective.y_target)).cast<Complex>();
  } else {
    f.segment((2 * L - 1) * n, n) = s.Lam[L - 1].cast<Complex>();
  }
  return f;
}

}  // namespace

ComplexVec residual(const ControlProblem& p, const ShootingState& s, int fine_steps,
                    const BvpOptions& bvp, SolveLedger* ledger) {
  return assemble_residual(p, s, fine_steps, bvp, ledger, true);
}

ComplexVec residual_coarse(const ControlProblem& p, const ShootingState& s,
                           int coarse_steps, const BvpOptions& bvp, SolveLedger* ledger) {
  return assemble_residual(p, s, coarse_steps, bvp, ledger, false);
}

JacobianContext build_jacobian_context(const ControlProblem& p, const ShootingState& s,
                                       int coarse_steps, const BvpOptions& bvp,
                                       SolveLedger* ledger) {
  check_state(p, s);
  const int L = s.num_intervals();
  const std::vector<double> t = interface_times(p.T, L);

  JacobianContext ctx;
  ctx.trajs.resize(L);
  ctx.solvers.resize(L);
  parallel_for(L, [&](int b) {
    const RealVec& y_a = (b == 0) ? p.y_init : s.Y[b - 1];
    try {
      BvpResult r = solve_bvp_nonlinear(p, y_a, s.Lam[b], t[b], t[b + 1], coarse_steps, bvp);
      ctx.trajs[b] = std::move(r.traj);
    } catch (const BvpSolveError& e) {
      std::ostringstream msg;
      msg << "coarse derivative-context solve, subinterval " << b + 1 << ": " << e.what();
      throw BvpSolveError(msg.str(), e.last_residual());
    }
    if (ledger) ledger->add_coarse_nonlinear(b);
    ctx.solvers[b] = std::make_unique<DerivativeSolver>(p, ctx.trajs[b], 1.0, 0.0, 0.0, 1.0);
  });
  return ctx;
}

ComplexVec jacobian_apply(const ControlProblem& p, const JacobianContext& ctx,
                          const ComplexVec& v, bool combined, SolveLedger* ledger) {
  const int L = ctx.num_intervals();
  const int n = p.dim;
  if (v.size() != 2 * static_cast<Eigen::Index>(L) * n)
    throw std::invalid_argument("jacobian_apply: vector length mismatch");

  auto dY = [&](int b) { return v.segment(b * n, n); };
  auto dLam = [&](int b) { return v.segment((L + b) * n, n); };
  const ComplexVec zero = ComplexVec::Zero(n);

  // s_prop[b] = P_y dY_b + P_lam dLam_{b+1}, t_prop[b] = Q_y dY_b + Q_lam dLam_{b+1}
  // on subinterval b's coarse linearization.
  std::vector<ComplexVec> s_prop(L), t_prop(L);
  parallel_for(L, [&](int b) {
    if (combined) {
      const DerivEndpoints ep =
          ctx.solvers[b]->solve(b == 0 ? zero : ComplexVec(dY(b - 1)), dLam(b), ledger, b);
      s_prop[b] = ep.z_b;
      t_prop[b] = ep.mu_a;
    } else {
      // Separate solves per boundary datum; dY_0 = 0 makes the first
      // subinterval's state-side solve trivial, so it is skipped.
      ComplexVec sz = ComplexVec::Zero(n), tz = ComplexVec::Zero(n);
      if (b > 0) {
        const DerivEndpoints ep = ctx.solvers[b]->solve(dY(b - 1), zero, ledger, b);
        sz = ep.z_b;
        tz = ep.mu_a;
      }
      const DerivEndpoints ep = ctx.solvers[b]->solve(zero, dLam(b), ledger, b);
      s_prop[b] = sz + ep.z_b;
      t_prop[b] = tz + ep.mu_a;
    }
  });

  ComplexVec out(2 * L * n);
  for (int b = 0; b < L; ++b) out.segment(b * n, n) = dY(b) - s_prop[b];
  for (int b = 0; b + 1 < L; ++b) out.segment((L + b) * n, n) = dLam(b) - t_prop[b + 1];
  if (p.objective.kind == ObjectiveKind::FinalValue) {
    out.segment((2 * L - 1) * n, n) = dLam(L - 1) - dY(L - 1);
  } else {
    out.segment((2 * L - 1) * n, n) = dLam(L - 1);
  }
  return out;
}

namespace {

RealVec implicit_euler_step(const ControlProblem& p, const RealVec& y_prev, double h) {
  RealVec u = y_prev;
  for (int it = 0; it < 30; ++it) {
    const RealVec r = u - y_prev - h * p.g(u);
    if (r.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, u.lpNorm<Eigen::Infinity>()))
      return u;
    RealMat jac = -h * p.g_jac(u);
    jac.diagonal().array() += 1.0;
    u -= jac.partialPivLu().solve(r);
  }
  const double rnorm = (u - y_prev - h * p.g(u)).lpNorm<Eigen::Infinity>();
  throw BvpSolveError("initial guess: implicit Euler step did not converge", rnorm);
}

}  // namespace

ShootingState initial_guess(const ControlProblem& p, int L, int steps_per_interval) {
  if (L < 1) throw std::invalid_argument("initial_guess: L must be >= 1");
  if (steps_per_interval < 1)
    throw std::invalid_argument("initial_guess: steps_per_interval must be >= 1");

  const double h = p.T / (static_cast<double>(L) * steps_per_interval);
  ShootingState s;
  s.Y.resize(L);
  s.Lam.resize(L);
  RealVec y = p.y_init;
  for (int b = 0; b < L; ++b) {
    for (int i = 0; i < steps_per_interval; ++i) y = implicit_euler_step(p, y, h);
    s.Y[b] = y;
  }
  const RealVec lam0 = p.objective.kind == ObjectiveKind::FinalValue
                           ? RealVec(s.Y[L - 1] - p.objective.y_target)
                           : RealVec(RealVec::Zero(p.dim));
  for (int b = 0; b < L; ++b) s.Lam[b] = lam0;
  return s;
}

namespace {

void validate(const NewtonOptions& o) {
  if (o.L < 1) throw std::invalid_argument("newton_solve: L must be >= 1");
  if (o.coarse_steps < 1) throw std::invalid_argument("newton_solve: coarse_steps must be >= 1");
  if (o.fine_steps < o.coarse_steps)
    throw std::invalid_argument("newton_solve: fine_steps must be >= coarse_steps");
  if (o.newton_tol <= 0.0 || o.gmres_tol <= 0.0)
    throw std::invalid_argument("newton_solve: tolerances must be positive");
  if (o.max_newton < 0 || o.max_gmres < 1)
    throw std::invalid_argument("newton_solve: iteration limits out of range");
}

}  // namespace

NewtonResult newton_solve(const ControlProblem& p, const NewtonOptions& opts,
                          const PrecondFactory& precond, const ShootingState* initial) {
  validate(opts);
  const int L = opts.L;
  const int n = p.dim;

  NewtonResult out;
  out.state = initial ? *initial : initial_guess(p, L, opts.coarse_steps);
  check_state(p, out.state);
  if (out.state.num_intervals() != L)
    throw std::invalid_argument("newton_solve: initial state has wrong interval count");

  SolveLedger ledger(L);
  long step_gmres = 0;
  bool step_gmres_ok = true;

  // Subinterval solver failures (Newton blowup, singular systems, inner-solve
  // breakdowns) end the iteration with the history kept, so a partial report
  // survives; configuration mistakes still throw.
  for (int k = 0;; ++k) {
    try {
      const ComplexVec f = residual(p, out.state, opts.fine_steps, opts.bvp, &ledger);
      const double rnorm = f.real().lpNorm<Eigen::Infinity>();

      NewtonStepRecord rec;
      rec.newton_index = k;
      rec.residual_norm = rnorm;
      rec.gmres_iters = step_gmres;
      rec.gmres_converged = step_gmres_ok;
      rec.ledger = ledger.snapshot();
      out.history.push_back(std::move(rec));

      if (!std::isfinite(rnorm)) {
        out.error = "matching residual is not finite";
        break;
      }
      if (rnorm <= opts.newton_tol) {
        out.converged = true;
        break;
      }
      if (k >= opts.max_newton) break;

      const JacobianContext ctx =
          build_jacobian_context(p, out.state, opts.coarse_steps, opts.bvp, &ledger);
      LinearMap m_right;
      if (precond) m_right = precond(out.state, ledger);

      const LinearMap a{
          2 * static_cast<Eigen::Index>(L) * n, 2 * static_cast<Eigen::Index>(L) * n,
          [&](const ComplexVec& w) {
            return jacobian_apply(p, ctx, w, opts.combined_derivatives, &ledger);
          }};

      // Relative tolerance with an absolute floor: once the right-hand side
      // is within two decades of the Newton target there is nothing to gain
      // from solving the step more accurately.
      const double floor_tol = 1e-2 * opts.newton_tol / f.norm();
      const GmresResult step =
          gmres(a, f, std::max(opts.gmres_tol, floor_tol), opts.max_gmres,
                precond ? &m_right : nullptr);
      ledger.add_gmres_iters(step.iters);
      ledger.add_newton_iter();
      step_gmres = step.iters;
      step_gmres_ok = step.converged;

      for (int b = 0; b < L; ++b) {
        out.state.Y[b] -= step.x.segment(b * n, n).real();
        out.state.Lam[b] -= step.x.segment((L + b) * n, n).real();
      }
    } catch (const std::runtime_error& e) {
      out.error = e.what();
      break;
    }
  }

  out.ledger = ledger.snapshot();
  return out;
}

}  // namespace paraopt
