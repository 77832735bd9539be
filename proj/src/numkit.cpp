#include "paraopt/numkit.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace paraopt {

LinearMap LinearMap::from_matrix(const ComplexMat& a) {
  return LinearMap{a.cols(), a.rows(),
                   [m = a](const ComplexVec& v) -> ComplexVec { return m * v; }};
}

LinearMap LinearMap::identity(Eigen::Index n) {
  return LinearMap{n, n, [](const ComplexVec& v) { return v; }};
}

namespace {

ComplexVec dft_impl(const ComplexVec& v, double sign) {
  const Eigen::Index n = v.size();
  ComplexVec out(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double w = sign * 2.0 * std::numbers::pi / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Complex acc = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      acc += std::polar(1.0, w * static_cast<double>(j) * static_cast<double>(k)) * v[k];
    }
    out[j] = scale * acc;
  }
  return out;
}

}  // namespace

ComplexVec dft(const ComplexVec& v) { return dft_impl(v, -1.0); }

ComplexVec idft(const ComplexVec& v) { return dft_impl(v, +1.0); }

GmresResult gmres(const LinearMap& a, const ComplexVec& b, double tol, int maxit,
                  const LinearMap* m_right) {
  if (a.dim_in != a.dim_out) throw std::invalid_argument("gmres: operator must be square");
  if (tol <= 0.0) throw std::invalid_argument("gmres: tol must be positive");
  if (maxit < 1) throw std::invalid_argument("gmres: maxit must be >= 1");

  const Eigen::Index n = b.size();
  GmresResult res;
  res.x = ComplexVec::Zero(n);

  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  const double target = tol * bnorm;

  std::vector<ComplexVec> basis;      // Arnoldi vectors v_1..v_{m+1}
  std::vector<ComplexVec> precond;    // z_j = M^{-1} v_j when preconditioned
  basis.reserve(static_cast<size_t>(maxit) + 1);
  basis.push_back(b / bnorm);

  Eigen::MatrixXcd hess = Eigen::MatrixXcd::Zero(maxit + 1, maxit);
  ComplexVec g = ComplexVec::Zero(maxit + 1);
  g[0] = bnorm;
  std::vector<Complex> cs(maxit), sn(maxit);

  int m = 0;
  bool happy = false;
  double resid = bnorm;
  while (m < maxit) {
    const int j = m;
    ComplexVec z = m_right ? m_right->apply(basis[j]) : basis[j];
    if (m_right) precond.push_back(z);
    ComplexVec w = a.apply(z);
    const double wnorm0 = w.norm();

    for (int i = 0; i <= j; ++i) {
      const Complex hij = basis[i].dot(w);  // conjugate(v_i) . w
      hess(i, j) = hij;
      w -= hij * basis[i];
    }
    const double hjj1 = w.norm();
    hess(j + 1, j) = hjj1;

    // Exact (happy) breakdown: the Krylov space is invariant.
    happy = hjj1 <= 1e-14 * std::max(1.0, wnorm0);
    if (!happy) basis.push_back(w / hjj1);

    for (int i = 0; i < j; ++i) {
      const Complex t = cs[i] * hess(i, j) + sn[i] * hess(i + 1, j);
      hess(i + 1, j) = -std::conj(sn[i]) * hess(i, j) + std::conj(cs[i]) * hess(i + 1, j);
      hess(i, j) = t;
    }
    // New rotation [c s; -conj(s) conj(c)] zeroing h_{j+1,j}.
    {
      const Complex h1 = hess(j, j);
      const Complex h2 = hess(j + 1, j);
      const double nrm = std::sqrt(std::norm(h1) + std::norm(h2));
      if (nrm == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else {
        cs[j] = std::conj(h1) / nrm;
        sn[j] = std::conj(h2) / nrm;
      }
    }
    hess(j, j) = cs[j] * hess(j, j) + sn[j] * hess(j + 1, j);
    hess(j + 1, j) = 0.0;
    const Complex gj = g[j];
    g[j] = cs[j] * gj;
    g[j + 1] = -std::conj(sn[j]) * gj;

    ++m;
    resid = std::abs(g[j + 1]);
    if (resid <= target || happy) break;
  }

  // Solve the m x m triangular system and expand in the stored basis.
  ComplexVec y = ComplexVec::Zero(m);
  for (int i = m - 1; i >= 0; --i) {
    Complex acc = g[i];
    for (int k = i + 1; k < m; ++k) acc -= hess(i, k) * y[k];
    y[i] = acc / hess(i, i);
  }
  ComplexVec x = ComplexVec::Zero(n);
  for (int i = 0; i < m; ++i) x += y[i] * (m_right ? precond[i] : basis[i]);

  res.x = x;
  res.iters = m;
  res.rel_residual = resid / bnorm;
  res.converged = resid <= target;
  res.breakdown = happy && !res.converged;
  return res;
}

ComplexVec dense_solve(const ComplexMat& a, const ComplexVec& b) {
  if (a.rows() != a.cols()) throw std::invalid_argument("dense_solve: matrix must be square");
  if (a.rows() != b.size()) throw std::invalid_argument("dense_solve: dimension mismatch");
  Eigen::PartialPivLU<ComplexMat> lu(a);
  const auto& diag = lu.matrixLU().diagonal();
  const double dmax = diag.cwiseAbs().maxCoeff();
  const double tiny = static_cast<double>(a.rows()) * 1e-15 * std::max(dmax, 1e-300);
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (std::abs(diag[i]) <= tiny) {
      throw SingularMatrixError("dense_solve: matrix is singular to working precision");
    }
  }
  return lu.solve(b);
}

}  // namespace paraopt
