#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "paraopt/bvpsolve.hpp"
#include "paraopt/model.hpp"
#include "paraopt/numkit.hpp"

namespace paraopt {

/// Interface unknowns of the matching system: states and adjoints at the
/// subinterval boundaries T_1..T_L. The left boundary value Y_0 = y_init is
/// fixed problem data and not part of the state. Flattened block layout is
/// [Y_1..Y_L, Lam_1..Lam_L].
struct ShootingState {
  std::vector<RealVec> Y;    // Y[b] = Y_{b+1}
  std::vector<RealVec> Lam;  // Lam[b] = Lambda_{b+1}

  int num_intervals() const { return static_cast<int>(Y.size()); }
  int dim() const { return Y.empty() ? 0 : static_cast<int>(Y.front().size()); }

  ComplexVec flatten() const;
  /// Rebuilds a state from the flattened layout, discarding imaginary parts
  /// (updates computed through the complex preconditioner carry only
  /// roundoff-level imaginary components).
  static ShootingState from_vector(const ComplexVec& v, int L, int n);
};

/// Uniform interface grid T_b = b*T/L, b = 0..L.
std::vector<double> interface_times(double T, int L);

/// Linearization data for one Newton iterate: the coarse trajectory of every
/// subinterval plus its factored derivative system (standard boundary rows),
/// so each Jacobian product costs one back-solve per subinterval instead of a
/// fresh factorization.
struct JacobianContext {
  std::vector<Trajectory> trajs;  // trajs[b] spans [T_b, T_{b+1}]
  std::vector<std::unique_ptr<DerivativeSolver>> solvers;

  int num_intervals() const { return static_cast<int>(trajs.size()); }
};

/// Matching residual: for each subinterval one fine boundary value solve with
/// data (Y_{b}, Lam_{b+1}), assembled as
///   block b        : Y_{b+1} - P(Y_b, Lam_{b+1})          (b = 0..L-1)
///   block L+b      : Lam_{b+1} - Q(Y_{b+1}, Lam_{b+2})    (b = 0..L-2)
///   block 2L-1     : Lam_L - (Y_L - y_target)   [final-value]
///                    Lam_L                       [tracking]
/// Subinterval solves run concurrently; the result is real-valued data in
/// complex storage.
ComplexVec residual(const ControlProblem& p, const ShootingState& s, int fine_steps,
                    const BvpOptions& bvp = {}, SolveLedger* ledger = nullptr);

/// Same assembly with the coarse propagators (the map the Jacobian context
/// linearizes); used to validate Jacobian products by finite differences.
ComplexVec residual_coarse(const ControlProblem& p, const ShootingState& s,
                           int coarse_steps, const BvpOptions& bvp = {},
                           SolveLedger* ledger = nullptr);

/// One coarse nonlinear solve per subinterval at the current iterate plus one
/// factorization of each subinterval's derivative system.
JacobianContext build_jacobian_context(const ControlProblem& p, const ShootingState& s,
                                       int coarse_steps, const BvpOptions& bvp = {},
                                       SolveLedger* ledger = nullptr);

/// Matrix-free product with the approximate Jacobian. With `combined` set,
/// each subinterval does a single derivative solve with boundary data
/// (dY_b, dLam_{b+1}) yielding the sums P_y dY + P_lam dLam and
/// Q_y dY + Q_lam dLam at once; otherwise the two boundary contributions are
/// solved separately (two solves per subinterval, the zero-data solve of the
/// first subinterval skipped).
ComplexVec jacobian_apply(const ControlProblem& p, const JacobianContext& ctx,
                          const ComplexVec& v, bool combined = true,
                          SolveLedger* ledger = nullptr);

/// Sequential coarse forward pass: Y_ell from implicit Euler of y' = g(y)
/// with the control ignored; adjoints start at zero (tracking) or at the
/// constant Y_L - y_target (final-value).
ShootingState initial_guess(const ControlProblem& p, int L, int steps_per_interval);

struct NewtonOptions {
  int L = 4;
  int coarse_steps = 2;
  int fine_steps = 64;
  double newton_tol = 1e-8;  // infinity norm of the matching residual
  int max_newton = 50;
  double gmres_tol = 1e-8;  // relative to the step right-hand side
  int max_gmres = 200;
  bool combined_derivatives = true;
  BvpOptions bvp;  // controls for the subinterval nonlinear solves
};

/// Builds the right preconditioner for one Newton step at the given iterate.
/// An empty function runs unpreconditioned.
using PrecondFactory =
    std::function<LinearMap(const ShootingState& state, SolveLedger& ledger)>;

struct NewtonStepRecord {
  int newton_index = 0;       // 0 is the initial guess
  double residual_norm = 0.0; // infinity norm of f at this iterate
  long gmres_iters = 0;       // iterations of the step that produced this iterate
  bool gmres_converged = true;
  LedgerSnapshot ledger;      // cumulative counters at this iterate
};

struct NewtonResult {
  ShootingState state;
  bool converged = false;
  std::vector<NewtonStepRecord> history;
  LedgerSnapshot ledger;
  std::string error;  // nonempty when a subinterval solver failed mid-iteration
};

/// Inexact Newton on the matching system: each step solves the approximate
/// Jacobian system by (optionally preconditioned) GMRES and applies the
/// update x <- x - s. The Jacobian context is refreshed at every iterate.
NewtonResult newton_solve(const ControlProblem& p, const NewtonOptions& opts,
                          const PrecondFactory& precond = {},
                          const ShootingState* initial = nullptr);

}  // namespace paraopt
