#pragma once

#include <Eigen/Sparse>
#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "paraopt/model.hpp"
#include "paraopt/numkit.hpp"

namespace paraopt {

/// Generalized linear two-point boundary conditions for the derivative system:
///   A_z z(T_a) + B_z z(T_b) = rhs_z
///   A_mu mu(T_a) + B_mu mu(T_b) = rhs_mu
/// The standard conditions z(T_a) = dy, mu(T_b) = dlam are the special case
/// A_z = 1, B_z = 0, A_mu = 0, B_mu = 1.
struct BCSpec {
  Complex A_z{1.0}, B_z{0.0};
  ComplexVec rhs_z;
  Complex A_mu{0.0}, B_mu{1.0};
  ComplexVec rhs_mu;

  static BCSpec standard(ComplexVec dy, ComplexVec dlam);
  /// Adjusted conditions -conj(d) z(T_a) + z(T_b) = a, mu(T_a) - d mu(T_b) = b.
  static BCSpec adjusted(Complex d, ComplexVec a, ComplexVec b);

  void validate(int n) const;
};

/// Discrete solution of a subinterval boundary value problem.
struct Trajectory {
  std::vector<double> times;  // strictly increasing, times.front() = T_a
  std::vector<RealVec> y;
  std::vector<RealVec> lam;

  int steps() const { return static_cast<int>(times.size()) - 1; }
};

struct LedgerSnapshot {
  std::vector<long> coarse_nonlinear;
  std::vector<long> coarse_linear;
  std::vector<long> fine;
  long gmres_iters = 0;
  long newton_iters = 0;

  long max_coarse_linear() const;
  long max_coarse_nonlinear() const;
  long total_coarse_nonlinear() const;
  long total_fine() const;
};

/// Counts BVP solves per subinterval plus global iteration counters. Safe for
/// concurrent increments from subinterval workers.
class SolveLedger {
 public:
  explicit SolveLedger(int num_intervals);

  void add_coarse_nonlinear(int interval) { coarse_nonlinear_[check(interval)]++; }
  void add_coarse_linear(int interval) { coarse_linear_[check(interval)]++; }
  void add_coarse_linear(int interval, long count) { coarse_linear_[check(interval)] += count; }
  void add_fine(int interval) { fine_[check(interval)]++; }
  /// Charges every subinterval, for work each processor replicates locally.
  void add_coarse_nonlinear_all();
  void add_coarse_linear_all(long count);
  void add_gmres_iters(long n) { gmres_iters_ += n; }
  void add_newton_iter() { newton_iters_++; }

  int num_intervals() const { return static_cast<int>(coarse_nonlinear_.size()); }
  LedgerSnapshot snapshot() const;

 private:
  int check(int interval) const;
  std::vector<std::atomic<long>> coarse_nonlinear_;
  std::vector<std::atomic<long>> coarse_linear_;
  std::vector<std::atomic<long>> fine_;
  std::atomic<long> gmres_iters_{0};
  std::atomic<long> newton_iters_{0};
};

class BvpSolveError : public std::runtime_error {
 public:
  BvpSolveError(const std::string& msg, double last_residual)
      : std::runtime_error(msg), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BvpOptions {
  double newton_tol = 1e-10;  // infinity norm of the discrete residual
  int max_newton = 25;
};

struct BvpResult {
  RealVec P_val;  // y(T_b)
  RealVec Q_val;  // lambda(T_a)
  Trajectory traj;
};

/// Solves the nonlinear optimality system on [t_a, t_b] with boundary values
/// y(t_a) = y_a, lambda(t_b) = lam_b on a uniform grid of `steps` implicit
/// Euler steps (forward variable implicit at the step end, adjoint implicit at
/// the step start), by Newton on all 2N(steps+1) unknowns.
BvpResult solve_bvp_nonlinear(const ControlProblem& p, const RealVec& y_a,
                              const RealVec& lam_b, double t_a, double t_b, int steps,
                              const BvpOptions& opts = {});

/// solve_bvp_nonlinear, counted as a coarse solve for `interval`.
BvpResult coarse_solve_nonlinear(const ControlProblem& p, const RealVec& y_a,
                                 const RealVec& lam_b, double t_a, double t_b, int steps,
                                 const BvpOptions& opts = {}, SolveLedger* ledger = nullptr,
                                 int interval = 0);

/// solve_bvp_nonlinear on a fine grid, counted as a fine solve.
BvpResult fine_solve(const ControlProblem& p, const RealVec& y_a, const RealVec& lam_b,
                     double t_a, double t_b, int fine_steps, const BvpOptions& opts = {},
                     SolveLedger* ledger = nullptr, int interval = 0);

struct DerivEndpoints {
  ComplexVec z_a, z_b, mu_a, mu_b;
};

/// Factored discretization of the linear derivative system about a trajectory,
/// with generalized boundary rows fixed at construction. The same implicit
/// Euler stencils as the nonlinear solver are used, so solutions are exact
/// derivatives of the discrete propagator maps. One factorization serves any
/// number of right-hand sides.
class DerivativeSolver {
 public:
  DerivativeSolver(const ControlProblem& p, const Trajectory& traj, Complex a_z,
                   Complex b_z, Complex a_mu, Complex b_mu);

  /// Solves with the given boundary right-hand sides. Counts one coarse
  /// linear solve for `interval` when a ledger is given.
  DerivEndpoints solve(const ComplexVec& rhs_z, const ComplexVec& rhs_mu,
                       SolveLedger* ledger = nullptr, int interval = 0) const;

  int dim() const { return n_; }

 private:
  int n_ = 0;
  int steps_ = 0;
  Eigen::SparseLU<Eigen::SparseMatrix<Complex>> lu_;
};

/// One-shot generalized-BC derivative solve (assemble, factor, solve).
DerivEndpoints coarse_solve_derivative(const ControlProblem& p, const Trajectory& traj,
                                       const BCSpec& bc, SolveLedger* ledger = nullptr,
                                       int interval = 0);

/// Dense propagator derivative blocks P_y, P_lam, Q_y, Q_lam assembled
/// column-by-column with 2N unit-vector derivative solves on `traj`.
struct PropagatorDerivs {
  ComplexMat P_y, P_lam, Q_y, Q_lam;
};

PropagatorDerivs assemble_propagator_derivs(const ControlProblem& p, const Trajectory& traj,
                                            SolveLedger* ledger = nullptr, int interval = 0);

}  // namespace paraopt
