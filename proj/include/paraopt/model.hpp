#pragma once

#include <functional>

#include "paraopt/numkit.hpp"

namespace paraopt {

enum class ObjectiveKind { FinalValue, Tracking };

/// Objective data: either a final-time target state or a tracking trajectory.
struct Objective {
  ObjectiveKind kind = ObjectiveKind::FinalValue;
  RealVec y_target;                      // FinalValue
  std::function<RealVec(double)> y_d;    // Tracking

  static Objective final_value(RealVec target);
  static Objective tracking(std::function<RealVec(double)> desired);
  static Objective tracking_constant(RealVec desired);
};

/// Optimal-control problem: minimize an objective subject to
/// y' = g(y) + u with the optimal control u = -lambda/gamma substituted.
///
/// The dynamics are described by g together with its Jacobian g'(y) and the
/// Jacobian of y -> g'(y)^T lambda (needed for the adjoint linearization),
/// both as dense matrices so that discrete boundary value systems can be
/// assembled directly.
struct ControlProblem {
  int dim = 0;
  std::function<RealVec(const RealVec&)> g;
  std::function<RealMat(const RealVec&)> g_jac;
  std::function<RealMat(const RealVec&, const RealVec&)> adjoint_hess_jac;
  double gamma = 1.0;
  double T = 1.0;
  RealVec y_init;
  Objective objective;

  /// g'(y) z
  RealVec g_jvp(const RealVec& y, const RealVec& z) const { return g_jac(y) * z; }
  /// g'(y)^T w
  RealVec g_vjp(const RealVec& y, const RealVec& w) const {
    return g_jac(y).transpose() * w;
  }
  /// H(y, lambda)^T z, the derivative of y -> g'(y)^T lambda in direction z
  RealVec adjoint_hess(const RealVec& y, const RealVec& lam, const RealVec& z) const {
    return adjoint_hess_jac(y, lam) * z;
  }

  /// Desired state at time t for the tracking objective.
  RealVec desired_state(double t) const { return objective.y_d(t); }
};

/// Linear dynamics g(y) = K y.
struct LinearModel {
  RealMat K;
};

ControlProblem make_linear_problem(const LinearModel& m, double gamma, double T,
                                   RealVec y_init, Objective obj);

/// Viscous Burgers dynamics discretized with Chebyshev collocation on [0, 1],
/// homogeneous Dirichlet boundaries eliminated. D1 and D2 act on interior
/// values only.
struct BurgersModel {
  RealMat D1;
  RealMat D2;
  double nu = 0.0;
  RealVec nodes;  // interior collocation points, ascending in (0, 1)
};

/// Chebyshev-Gauss-Lobatto points on [0, 1], ascending, n_total = n+1 points
/// for polynomial degree n.
RealVec cheb_lobatto_nodes(int degree);

/// First-derivative collocation matrix on the full Lobatto grid (degree+1
/// points) mapped to [0, 1]. Diagonal entries use the negative-sum trick.
RealMat cheb_lobatto_d1(int degree);

/// Builds the interior Burgers operators for n_interior unknowns. The second
/// derivative is the square of the full first-derivative matrix restricted to
/// the interior after boundary elimination.
BurgersModel chebyshev_setup(int n_interior, double nu);

/// -1/2 D1 (y .* y) + nu D2 y
RealVec burgers_rhs(const BurgersModel& m, const RealVec& y);
/// (-D1 diag(y) + nu D2) z
RealVec burgers_jvp(const BurgersModel& m, const RealVec& y, const RealVec& z);
/// (-diag(y) D1^T + nu D2^T) w
RealVec burgers_vjp(const BurgersModel& m, const RealVec& y, const RealVec& w);
/// -(D1^T lam) .* z
RealVec burgers_adjoint_hess(const BurgersModel& m, const RealVec& lam, const RealVec& z);

ControlProblem make_burgers_problem(const BurgersModel& m, double gamma, double T,
                                    RealVec y_init, Objective obj);

enum class InitialProfile { Smooth, Nonsmooth };

/// Pointwise samples of the smooth profile sin(4 pi x) or the nonsmooth
/// indicator of (0, 1/2] at the given nodes.
RealVec sample_initial(InitialProfile profile, const RealVec& nodes);

}  // namespace paraopt
