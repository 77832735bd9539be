#include "paraopt/model.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace paraopt {

Objective Objective::final_value(RealVec target) {
  Objective o;
  o.kind = ObjectiveKind::FinalValue;
  o.y_target = std::move(target);
  return o;
}

Objective Objective::tracking(std::function<RealVec(double)> desired) {
  Objective o;
  o.kind = ObjectiveKind::Tracking;
  o.y_d = std::move(desired);
  return o;
}

Objective Objective::tracking_constant(RealVec desired) {
  return tracking([d = std::move(desired)](double) { return d; });
}

ControlProblem make_linear_problem(const LinearModel& m, double gamma, double T,
                                   RealVec y_init, Objective obj) {
  ControlProblem p;
  p.dim = static_cast<int>(m.K.rows());
  p.g = [K = m.K](const RealVec& y) -> RealVec { return K * y; };
  p.g_jac = [K = m.K](const RealVec&) -> RealMat { return K; };
  p.adjoint_hess_jac = [n = p.dim](const RealVec&, const RealVec&) -> RealMat {
    return RealMat::Zero(n, n);
  };
  p.gamma = gamma;
  p.T = T;
  p.y_init = std::move(y_init);
  p.objective = std::move(obj);
  return p;
}

RealVec cheb_lobatto_nodes(int degree) {
  RealVec s(degree + 1);
  for (int j = 0; j <= degree; ++j) {
    s[j] = 0.5 * (1.0 - std::cos(std::numbers::pi * j / degree));
  }
  return s;
}

RealMat cheb_lobatto_d1(int degree) {
  const int m = degree;
  RealVec x(m + 1);
  for (int j = 0; j <= m; ++j) x[j] = std::cos(std::numbers::pi * j / m);

  RealVec c(m + 1);
  for (int j = 0; j <= m; ++j) {
    c[j] = (j == 0 || j == m) ? 2.0 : 1.0;
    if (j % 2 == 1) c[j] = -c[j];
  }

  RealMat d(m + 1, m + 1);
  for (int i = 0; i <= m; ++i) {
    double rowsum = 0.0;
    for (int j = 0; j <= m; ++j) {
      if (i == j) continue;
      d(i, j) = (c[i] / c[j]) / (x[i] - x[j]);
      rowsum += d(i, j);
    }
    d(i, i) = -rowsum;
  }
  // Map x in [-1, 1] to s = (1 - x)/2 in [0, 1]: d/ds = -2 d/dx.
  return -2.0 * d;
}

BurgersModel chebyshev_setup(int n_interior, double nu) {
  if (n_interior < 2) throw std::invalid_argument("chebyshev_setup: need at least 2 interior nodes");
  const int m = n_interior + 1;
  const RealMat d1_full = cheb_lobatto_d1(m);
  const RealMat d2_full = d1_full * d1_full;
  const RealVec s = cheb_lobatto_nodes(m);

  BurgersModel model;
  model.D1 = d1_full.block(1, 1, n_interior, n_interior);
  model.D2 = d2_full.block(1, 1, n_interior, n_interior);
  model.nu = nu;
  model.nodes = s.segment(1, n_interior);
  return model;
}

RealVec burgers_rhs(const BurgersModel& m, const RealVec& y) {
  return -0.5 * (m.D1 * y.cwiseProduct(y)) + m.nu * (m.D2 * y);
}

RealVec burgers_jvp(const BurgersModel& m, const RealVec& y, const RealVec& z) {
  return -(m.D1 * y.cwiseProduct(z)) + m.nu * (m.D2 * z);
}

RealVec burgers_vjp(const BurgersModel& m, const RealVec& y, const RealVec& w) {
  return -y.cwiseProduct(m.D1.transpose() * w) + m.nu * (m.D2.transpose() * w);
}

RealVec burgers_adjoint_hess(const BurgersModel& m, const RealVec& lam, const RealVec& z) {
  return -(m.D1.transpose() * lam).cwiseProduct(z);
}

ControlProblem make_burgers_problem(const BurgersModel& m, double gamma, double T,
                                    RealVec y_init, Objective obj) {
  ControlProblem p;
  p.dim = static_cast<int>(m.D1.rows());
  p.g = [m](const RealVec& y) { return burgers_rhs(m, y); };
  p.g_jac = [m](const RealVec& y) -> RealMat {
    return -(m.D1 * y.asDiagonal()) + m.nu * m.D2;
  };
  p.adjoint_hess_jac = [m](const RealVec&, const RealVec& lam) -> RealMat {
    return RealMat((-(m.D1.transpose() * lam)).asDiagonal());
  };
  p.gamma = gamma;
  p.T = T;
  p.y_init = std::move(y_init);
  p.objective = std::move(obj);
  return p;
}

RealVec sample_initial(InitialProfile profile, const RealVec& nodes) {
  RealVec out(nodes.size());
  for (Eigen::Index i = 0; i < nodes.size(); ++i) {
    const double x = nodes[i];
    out[i] = profile == InitialProfile::Smooth
                 ? std::sin(4.0 * std::numbers::pi * x)
                 : ((x > 0.0 && x <= 0.5) ? 1.0 : 0.0);
  }
  return out;
}

}  // namespace paraopt
