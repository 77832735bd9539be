#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <stdexcept>

namespace paraopt {

using Complex = std::complex<double>;
using ComplexVec = Eigen::VectorXcd;
using ComplexMat = Eigen::MatrixXcd;
using RealVec = Eigen::VectorXd;
using RealMat = Eigen::MatrixXd;

/// Matrix-free linear operator over complex vectors.
struct LinearMap {
  Eigen::Index dim_in = 0;
  Eigen::Index dim_out = 0;
  std::function<ComplexVec(const ComplexVec&)> apply;

  ComplexVec operator()(const ComplexVec& v) const { return apply(v); }

  static LinearMap from_matrix(const ComplexMat& a);
  static LinearMap identity(Eigen::Index n);
};

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unitary DFT, forward convention out_j = (1/sqrt(L)) sum_k exp(-2*pi*i*j*k/L) v_k.
/// Direct O(L^2) evaluation; block counts here stay small.
ComplexVec dft(const ComplexVec& v);

/// Exact inverse of dft (the adjoint transform).
ComplexVec idft(const ComplexVec& v);

struct GmresResult {
  ComplexVec x;
  int iters = 0;
  bool converged = false;
  bool breakdown = false;        // Arnoldi breakdown before the residual test passed
  double rel_residual = 0.0;     // estimated true relative residual
};

/// Full (non-restarted) GMRES with modified Gram-Schmidt and Givens rotations.
/// Right preconditioning: solves A*M^{-1}*u = b and returns x = M^{-1}*u, so the
/// residual recurrence tracks the true residual of A*x = b. The preconditioned
/// basis is stored, so M is applied exactly once per iteration.
GmresResult gmres(const LinearMap& a, const ComplexVec& b, double tol, int maxit,
                  const LinearMap* m_right = nullptr);

/// Dense LU solve with partial pivoting. Throws SingularMatrixError when a
/// pivot is zero to working precision.
ComplexVec dense_solve(const ComplexMat& a, const ComplexVec& b);

}  // namespace paraopt
