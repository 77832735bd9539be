#include <doctest.h>

#include <cmath>

#include "paraopt/model.hpp"
#include "test_support.hpp"

using namespace paraopt;

namespace {

RealVec fd_dir(const std::function<RealVec(const RealVec&)>& f, const RealVec& y,
               const RealVec& z, double h) {
  return (f(y + h * z) - f(y - h * z)) / (2.0 * h);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("chebyshev differentiation is exact on quadratics") {
  const int n = 8;
  const BurgersModel m = chebyshev_setup(n, 0.01);
  REQUIRE(m.nodes.size() == n);
  REQUIRE(m.D1.rows() == n);
  REQUIRE(m.D2.rows() == n);

  // p(x) = x(1-x) vanishes at both boundaries, so the interior-restricted
  // operators see the whole polynomial: D1 p = 1 - 2x, D2 p = -2.
  RealVec p(n), dp(n);
  for (int i = 0; i < n; ++i) {
    const double x = m.nodes[i];
    p[i] = x * (1.0 - x);
    dp[i] = 1.0 - 2.0 * x;
  }
  CHECK((m.D1 * p - dp).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((m.D2 * p + 2.0 * RealVec::Ones(n)).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("chebyshev nodes are interior to (0,1) and ascending") {
  const BurgersModel m = chebyshev_setup(6, 0.01);
  for (int i = 0; i < 6; ++i) {
    CHECK(m.nodes[i] > 0.0);
    CHECK(m.nodes[i] < 1.0);
    if (i) CHECK(m.nodes[i] > m.nodes[i - 1]);
  }
}

TEST_CASE("burgers_rhs at zero state") {
  const BurgersModel m = chebyshev_setup(8, 0.01);
  CHECK(burgers_rhs(m, RealVec::Zero(8)).norm() == 0.0);
}

TEST_CASE("burgers_rhs with zero viscosity reduces to the flux term") {
  const BurgersModel m = chebyshev_setup(8, 0.0);
  const double c = 0.75;
  const RealVec y = RealVec::Constant(8, c);
  const RealVec squared = RealVec::Constant(8, c * c);
  const RealVec expect = -0.5 * (m.D1 * squared);
  CHECK((burgers_rhs(m, y) - expect).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("burgers_rhs matches an independent dense evaluation") {
  auto rng = ts::make_rng(201);
  const BurgersModel m = chebyshev_setup(8, 0.01);
  const RealVec y = ts::random_rvec(8, rng);
  const RealVec yy = y.array().square().matrix();
  const RealVec expect = -0.5 * (m.D1 * yy) + m.nu * (m.D2 * y);
  CHECK((burgers_rhs(m, y) - expect).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("burgers derivative actions at the zero state") {
  auto rng = ts::make_rng(202);
  const BurgersModel m = chebyshev_setup(8, 0.05);
  const RealVec z = ts::random_rvec(8, rng);
  const RealVec lam = ts::random_rvec(8, rng);
  CHECK((burgers_jvp(m, RealVec::Zero(8), z) - m.nu * (m.D2 * z)).norm() < 1e-12);
  const RealVec expect = -((m.D1.transpose() * lam).array() * z.array()).matrix();
  CHECK((burgers_adjoint_hess(m, lam, z) - expect).norm() < 1e-12);
}

TEST_CASE("burgers jvp and vjp are adjoint") {
  auto rng = ts::make_rng(203);
  const BurgersModel m = chebyshev_setup(8, 0.01);
  for (int trial = 0; trial < 100; ++trial) {
    const RealVec y = ts::random_rvec(8, rng);
    const RealVec z = ts::random_rvec(8, rng);
    const RealVec w = ts::random_rvec(8, rng);
    const double a = burgers_jvp(m, y, z).dot(w);
    const double b = z.dot(burgers_vjp(m, y, w));
    CHECK(std::abs(a - b) < 1e-12 * (1.0 + std::abs(a)));
  }
}

TEST_CASE("burgers jvp matches finite differences of the dynamics") {
  auto rng = ts::make_rng(204);
  const BurgersModel m = chebyshev_setup(8, 0.01);
  const RealVec y = ts::random_rvec(8, rng);
  const RealVec z = ts::random_rvec(8, rng);
  const RealVec fd =
      fd_dir([&](const RealVec& s) { return burgers_rhs(m, s); }, y, z, 1e-6);
  const RealVec jv = burgers_jvp(m, y, z);
  CHECK((jv - fd).norm() < 1e-6 * (1.0 + jv.norm()));
}

TEST_CASE("adjoint_hess matches finite differences of the vjp") {
  auto rng = ts::make_rng(205);
  const BurgersModel m = chebyshev_setup(8, 0.01);
  const RealVec y = ts::random_rvec(8, rng);
  const RealVec lam = ts::random_rvec(8, rng);
  const RealVec z = ts::random_rvec(8, rng);
  const RealVec fd =
      fd_dir([&](const RealVec& s) { return burgers_vjp(m, s, lam); }, y, z, 1e-6);
  const RealVec hz = burgers_adjoint_hess(m, lam, z);
  CHECK((hz - fd).norm() < 1e-6 * (1.0 + hz.norm()));
}

TEST_CASE("linear dynamics: state-independent jvp and zero curvature") {
  auto rng = ts::make_rng(206);
  RealMat k(3, 3);
  for (int i = 0; i < 3; ++i) k.row(i) = ts::random_rvec(3, rng).transpose();
  const ControlProblem p = make_linear_problem({k}, 1.0, 1.0, RealVec::Zero(3),
                                               Objective::final_value(RealVec::Zero(3)));
  const RealVec y1 = ts::random_rvec(3, rng), y2 = ts::random_rvec(3, rng);
  const RealVec z = ts::random_rvec(3, rng), lam = ts::random_rvec(3, rng);
  CHECK((p.g(y1) - k * y1).norm() < 1e-14);
  CHECK((p.g_jvp(y1, z) - p.g_jvp(y2, z)).norm() == 0.0);
  CHECK(p.adjoint_hess(y1, lam, z).norm() == 0.0);
}

TEST_CASE("control problem wiring keeps the adjoint identity") {
  auto rng = ts::make_rng(207);
  const BurgersModel m = chebyshev_setup(6, 0.02);
  const RealVec y0 = sample_initial(InitialProfile::Smooth, m.nodes);
  const ControlProblem p =
      make_burgers_problem(m, 1.0, 1.0, y0, Objective::final_value(RealVec::Zero(6)));
  for (int trial = 0; trial < 100; ++trial) {
    const RealVec y = ts::random_rvec(6, rng);
    const RealVec z = ts::random_rvec(6, rng);
    const RealVec w = ts::random_rvec(6, rng);
    const double a = p.g_jvp(y, z).dot(w);
    const double b = z.dot(p.g_vjp(y, w));
    CHECK(std::abs(a - b) < 1e-12 * (1.0 + std::abs(a)));
  }
}

TEST_CASE("initial profiles sample the expected closed forms") {
  RealVec nodes(4);
  nodes << 0.125, 0.25, 0.5, 0.75;
  const RealVec smooth = sample_initial(InitialProfile::Smooth, nodes);
  CHECK(std::abs(smooth[0] - 1.0) < 1e-15);  // sin(pi/2)
  CHECK(std::abs(smooth[1]) < 1e-15);        // sin(pi)
  const RealVec rough = sample_initial(InitialProfile::Nonsmooth, nodes);
  CHECK(rough[1] == 1.0);  // x = 1/4 inside (0, 1/2]
  CHECK(rough[2] == 1.0);  // x = 1/2 is included
  CHECK(rough[3] == 0.0);  // x = 3/4 outside
}

TEST_CASE("tracking objective carries the desired state") {
  RealVec d(2);
  d << 0.5, -0.25;
  const Objective obj = Objective::tracking_constant(d);
  CHECK(obj.kind == ObjectiveKind::Tracking);
  CHECK((obj.y_d(0.0) - d).norm() == 0.0);
  CHECK((obj.y_d(0.77) - d).norm() == 0.0);
}

}  // TEST_SUITE
