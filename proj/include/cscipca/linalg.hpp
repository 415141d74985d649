#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace cscipca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Solve M x = b for symmetric PSD M via eigendecomposition, dropping
/// eigenvalues below rank_tol * lambda_max. Returns the minimum-norm
/// least-squares solution when M is rank deficient; *truncated is set
/// when any direction was dropped.
inline Vector spd_solve(const Matrix& m, const Vector& b, double rank_tol, bool* truncated = nullptr) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Vector& ev = eig.eigenvalues();
  const double lmax = ev.cwiseAbs().maxCoeff();
  if (!(lmax > 0.0)) throw std::runtime_error("zero normal-equations matrix");
  const double cutoff = rank_tol * lmax;
  Vector inv_ev(ev.size());
  bool dropped = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff) {
      inv_ev(i) = 1.0 / ev(i);
    } else {
      inv_ev(i) = 0.0;
      dropped = true;
    }
  }
  if (truncated) *truncated = dropped;
  return eig.eigenvectors() * (inv_ev.asDiagonal() * (eig.eigenvectors().transpose() * b));
}

/// Numerical rank: count of singular values above rank_tol * sigma_max.
inline int numerical_rank(const Matrix& m, double rank_tol) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(0) > 0.0)) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rank_tol * sv(0)) ++r;
  return r;
}

/// One cell of the structural component: x * Gamma * f.
inline double structural_value(const Eigen::RowVectorXd& x, const Matrix& gamma, const Eigen::Ref<const Vector>& f) {
  return (x * gamma).dot(f);
}

/// Flip rows of `factors` (and matching columns of `gamma`) so the
/// largest-magnitude entry of each factor path is positive. Keeps the
/// product gamma * factors unchanged; makes decompositions reproducible.
inline void canonicalize_signs(Matrix& gamma, Matrix& factors) {
  for (Eigen::Index k = 0; k < factors.rows(); ++k) {
    Eigen::Index at = 0;
    factors.row(k).cwiseAbs().maxCoeff(&at);
    if (factors(k, at) < 0.0) {
      factors.row(k) *= -1.0;
      gamma.col(k) *= -1.0;
    }
  }
}

}  // namespace cscipca
