#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "paraopt/bvpsolve.hpp"
#include "paraopt/model.hpp"
#include "paraopt/numkit.hpp"
#include "paraopt/shooting.hpp"

namespace paraopt {

/// Diagonalization data of the alpha-circulant C(alpha) (ones on the first
/// subdiagonal, alpha in the top-right corner): the Gamma_alpha scaling and
/// the eigenvalues d_1..d_L. Requires |alpha| = 1 so that C(alpha) and its
/// adjoint share the scaled-Fourier diagonalization and all |d_ell| = 1.
struct CirculantSpectrum {
  Complex alpha{1.0, 0.0};
  int L = 1;
  ComplexVec gamma_factors;  // alpha^{(ell-1)/L}, ell = 1..L
  ComplexVec d;              // eigenvalues of C(alpha)
};

CirculantSpectrum circulant_spectrum(int L, Complex alpha);

/// Arithmetic means of the interface states in fixed index order.
std::pair<RealVec, RealVec> averages(const ShootingState& s);

/// Averaged linearization data shared by all inner systems of one Newton
/// step: the mean interface values and a coarse solve of the optimality
/// system on one representative subinterval [0, dT] with boundary values
/// y(0) = Y_av, lambda(dT) = Lam_av.
struct AveragedContext {
  RealVec Y_av, Lam_av;
  Trajectory traj;
};

/// Counts one coarse nonlinear solve on every subinterval: in a distributed
/// run each processor computes its own copy of the averaged trajectory.
AveragedContext build_averaged_context(const ControlProblem& p, const ShootingState& s,
                                       int coarse_steps, const BvpOptions& bvp = {},
                                       SolveLedger* ledger = nullptr);

/// One frequency's 2N x 2N system
///   [ I - d P_y     -P_lam       ] [dy  ]   [dp]
///   [ -Q_y          I - d* Q_lam ] [dlam] = [dq]
/// with the propagator derivatives taken on the averaged trajectory.
struct InnerSystem {
  const ControlProblem* problem = nullptr;
  const Trajectory* traj = nullptr;
  Complex d{1.0, 0.0};
};

enum class InnerMethod { AdjustedBC, InnerGmres, Direct };

struct InnerSolution {
  ComplexVec dy, dlam;
  bool converged = true;
  int iters = 0;  // inner GMRES iterations; 0 for the direct routes
};

class InnerSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Direct inversion through one derivative solve with adjusted boundary
/// conditions: with theta = angle(d), c = e^{i theta/2}, a = dp/c, b = c dq,
/// solve the derivative system under -d* z(T_a) + z(T_b) = a,
/// mu(T_a) - d mu(T_b) = b and read off dy = -z(T_a)/c, dlam = -c mu(T_b).
InnerSolution inner_solve_adjusted_bc(const InnerSystem& sys, const ComplexVec& dp,
                                      const ComplexVec& dq, SolveLedger* ledger = nullptr,
                                      int interval = 0);

/// Matrix-free GMRES on the inner system; every operator application costs
/// two derivative solves (the two blocks carry different d scalings, so the
/// boundary data cannot be combined). maxit = 0 derives a bound from the
/// system size.
InnerSolution inner_solve_gmres(const InnerSystem& sys, const ComplexVec& dp,
                                const ComplexVec& dq, double tol,
                                SolveLedger* ledger = nullptr, int interval = 0,
                                int maxit = 0);

/// Dense route: assembles the four propagator derivative blocks with 2N
/// unit-vector derivative solves, forms the inner matrix, and LU-solves.
/// Guarded by `assembly_cap` on the state dimension.
InnerSolution inner_solve_direct(const InnerSystem& sys, const ComplexVec& dp,
                                 const ComplexVec& dq, SolveLedger* ledger = nullptr,
                                 int interval = 0, int assembly_cap = 512);

/// The factorized preconditioner application
///   P(alpha)^{-1} = (blkdiag(Gamma^-1 F*, Gamma^-1 F*) ox I)
///                   . blkdiag(M_1..M_L)^{-1} . (blkdiag(F Gamma, F Gamma) ox I)
/// built once per Newton step: the adjusted-BC route factors one derivative
/// system per frequency eagerly, the GMRES route shares one standard
/// factorization, and the direct route assembles the dense blocks once.
class DiagPreconditioner {
 public:
  DiagPreconditioner(const ControlProblem& p, AveragedContext ctx, CirculantSpectrum spec,
                     InnerMethod method, double inner_tol, int direct_cap,
                     SolveLedger* ledger);

  ComplexVec apply(const ComplexVec& v) const;
  Eigen::Index dim() const { return 2 * static_cast<Eigen::Index>(spec_.L) * problem_.dim; }

 private:
  InnerSolution solve_frequency(int jf, const ComplexVec& dp, const ComplexVec& dq) const;

  ControlProblem problem_;
  AveragedContext ctx_;
  CirculantSpectrum spec_;
  InnerMethod method_;
  double inner_tol_;
  SolveLedger* ledger_;
  ComplexMat fourier_;                                      // dense unitary DFT matrix
  std::vector<std::unique_ptr<DerivativeSolver>> adjusted_; // per frequency
  std::unique_ptr<DerivativeSolver> standard_;              // shared, inner GMRES route
  std::vector<ComplexMat> direct_m_;                        // per-frequency dense systems
};

/// One-shot application of P(alpha)^{-1} (test and exploration entry point).
ComplexVec precond_apply(const ControlProblem& p, const AveragedContext& ctx,
                         const CirculantSpectrum& spec, InnerMethod method,
                         const ComplexVec& v, double inner_tol = 1e-10,
                         SolveLedger* ledger = nullptr);

struct PrecondOptions {
  Complex alpha{1.0, 0.0};
  InnerMethod method = InnerMethod::AdjustedBC;
  double inner_tol = 1e-10;
  int direct_cap = 512;
  int coarse_steps = 2;
  BvpOptions bvp;
};

/// Wires the preconditioner into newton_solve: at each Newton step the
/// returned factory averages the iterate, performs the additional coarse
/// solve, and hands back the ready-to-apply operator.
PrecondFactory make_diag_precond_factory(const ControlProblem& p, int L,
                                         const PrecondOptions& opts);

}  // namespace paraopt
