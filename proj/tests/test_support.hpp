#pragma once

// Shared helpers for the unit suites and the acceptance gate: seeded random
// vectors, dense reference builders for the block structures the library
// only ever applies matrix-free, and finite-difference probes.

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "paraopt/bvpsolve.hpp"
#include "paraopt/model.hpp"
#include "paraopt/numkit.hpp"
#include "paraopt/precond.hpp"
#include "paraopt/shooting.hpp"

namespace ts {

using paraopt::Complex;
using paraopt::ComplexMat;
using paraopt::ComplexVec;
using paraopt::RealMat;
using paraopt::RealVec;

inline std::mt19937 make_rng(unsigned seed) { return std::mt19937(seed); }

inline RealVec random_rvec(int n, std::mt19937& g) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RealVec v(n);
  for (int i = 0; i < n; ++i) v[i] = u(g);
  return v;
}

inline ComplexVec random_cvec(int n, std::mt19937& g) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ComplexVec v(n);
  for (int i = 0; i < n; ++i) v[i] = Complex(u(g), u(g));
  return v;
}

inline double rel_err(const ComplexVec& got, const ComplexVec& want) {
  const double scale = want.norm();
  return scale > 0 ? (got - want).norm() / scale : (got - want).norm();
}

/// Densify a matrix-free operator column by column.
inline ComplexMat dense_from_map(const paraopt::LinearMap& m) {
  ComplexMat a(m.dim_out, m.dim_in);
  for (Eigen::Index j = 0; j < m.dim_in; ++j) {
    ComplexVec e = ComplexVec::Zero(m.dim_in);
    e[j] = 1.0;
    a.col(j) = m.apply(e);
  }
  return a;
}

/// Forward DFT matrix matching numkit's convention,
/// F_jk = exp(-2 pi i j k / L) / sqrt(L).
inline ComplexMat dft_matrix(int L) {
  ComplexMat f(L, L);
  const double w = -2.0 * M_PI / L;
  for (int j = 0; j < L; ++j)
    for (int k = 0; k < L; ++k) f(j, k) = std::polar(1.0 / std::sqrt(double(L)), w * j * k);
  return f;
}

/// The alpha-circulant: ones on the first subdiagonal, alpha in the top-right
/// corner (for L = 1 the wrap-around lands on the diagonal).
inline ComplexMat circulant(int L, Complex alpha) {
  ComplexMat c = ComplexMat::Zero(L, L);
  for (int i = 1; i < L; ++i) c(i, i - 1) = 1.0;
  c(0, L - 1) += alpha;
  return c;
}

inline ComplexMat gamma_matrix(const paraopt::CirculantSpectrum& s) {
  ComplexMat g = ComplexMat::Zero(s.L, s.L);
  for (int i = 0; i < s.L; ++i) g(i, i) = s.gamma_factors[i];
  return g;
}

inline ComplexMat kron(const ComplexMat& a, const ComplexMat& b) {
  ComplexMat k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

/// One frequency's inner system
///   [ I - d P_y     -P_lam       ]
///   [ -Q_y          I - d* Q_lam ]
inline ComplexMat inner_matrix(const paraopt::PropagatorDerivs& pd, Complex d) {
  const Eigen::Index n = pd.P_y.rows();
  ComplexMat m(2 * n, 2 * n);
  const ComplexMat id = ComplexMat::Identity(n, n);
  m.topLeftCorner(n, n) = id - d * pd.P_y;
  m.topRightCorner(n, n) = -pd.P_lam;
  m.bottomLeftCorner(n, n) = -pd.Q_y;
  m.bottomRightCorner(n, n) = id - std::conj(d) * pd.Q_lam;
  return m;
}

/// Dense matching-system Jacobian for problems whose propagator derivative
/// blocks are the same on every subinterval (linear dynamics, uniform grid),
/// assembled literally from the Kronecker structure: identities, the shift
/// coupling on the Y half, its adjoint on the Lam half, and the corner block
/// tying the last adjoint row to the final state (final-value only).
inline ComplexMat dense_jacobian_kron(const paraopt::PropagatorDerivs& pd, int L,
                                      paraopt::ObjectiveKind kind) {
  const Eigen::Index n = pd.P_y.rows();
  const ComplexMat il = ComplexMat::Identity(L, L);
  const ComplexMat in = ComplexMat::Identity(n, n);
  ComplexMat b = ComplexMat::Zero(L, L);
  for (int i = 1; i < L; ++i) b(i, i - 1) = 1.0;
  ComplexMat e = ComplexMat::Zero(L, L);
  e(L - 1, L - 1) = 1.0;

  ComplexMat j(2 * L * n, 2 * L * n);
  const Eigen::Index half = L * n;
  j.topLeftCorner(half, half) = kron(il, in) - kron(b, pd.P_y);
  j.topRightCorner(half, half) = -kron(il, pd.P_lam);
  // Final-value: the last matching row is Lam_L - (Y_L - y_target), so the
  // corner block cancels the Q_y coupling and leaves -I. Tracking: the last
  // row is Lam_L alone and the corner block only cancels.
  ComplexMat corner = pd.Q_y;
  if (kind == paraopt::ObjectiveKind::FinalValue) corner -= in;
  j.bottomLeftCorner(half, half) = -kron(il, pd.Q_y) + kron(e, corner);
  j.bottomRightCorner(half, half) = kron(il, in) - kron(b.adjoint(), pd.Q_lam);
  return j;
}

/// Dense averaged preconditioner: the matching-system shape with the shift
/// replaced by the alpha-circulant, constant averaged blocks, and the corner
/// coupling dropped.
inline ComplexMat dense_precond_matrix(const paraopt::PropagatorDerivs& pd,
                                       const paraopt::CirculantSpectrum& spec) {
  const Eigen::Index n = pd.P_y.rows();
  const int L = spec.L;
  const ComplexMat il = ComplexMat::Identity(L, L);
  const ComplexMat in = ComplexMat::Identity(n, n);
  const ComplexMat c = circulant(L, spec.alpha);

  ComplexMat pmat(2 * L * n, 2 * L * n);
  const Eigen::Index half = L * n;
  pmat.topLeftCorner(half, half) = kron(il, in) - kron(c, pd.P_y);
  pmat.topRightCorner(half, half) = -kron(il, pd.P_lam);
  pmat.bottomLeftCorner(half, half) = -kron(il, pd.Q_y);
  pmat.bottomRightCorner(half, half) = kron(il, in) - kron(c.adjoint(), pd.Q_lam);
  return pmat;
}

/// Central finite-difference directional derivative of the coarse matching
/// residual. The direction must be real-valued data in complex storage.
inline ComplexVec fd_coarse_jacobian_apply(const paraopt::ControlProblem& p,
                                           const paraopt::ShootingState& s, int coarse_steps,
                                           const ComplexVec& v, double h,
                                           const paraopt::BvpOptions& bvp = {}) {
  const int L = s.num_intervals();
  const int n = s.dim();
  const ComplexVec x = s.flatten();
  const auto plus = paraopt::ShootingState::from_vector(x + h * v, L, n);
  const auto minus = paraopt::ShootingState::from_vector(x - h * v, L, n);
  const ComplexVec fp = paraopt::residual_coarse(p, plus, coarse_steps, bvp);
  const ComplexVec fm = paraopt::residual_coarse(p, minus, coarse_steps, bvp);
  return (fp - fm) / (2.0 * h);
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string fmt(Complex z) { return fmt(z.real()) + "+" + fmt(z.imag()) + "i"; }

}  // namespace ts
