#pragma once

// Rotation to the identified representative of an estimated (Gamma, F)
// pair: Gamma_norm' Gamma_norm = I_K and F_norm F_norm' / T diagonal. The
// rotation leaves the structural component X Gamma F' unchanged, so any
// quantity built from it (imputations, treatment effects) is invariant.

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cscipca/ipca.hpp"
#include "cscipca/linalg.hpp"

namespace cscipca {

struct RotationMatrix {
  Matrix r;  // K x K, invertible
};

/// Build the normalizing rotation. r1 is the upper-triangular Cholesky
/// factor of Gamma'Gamma (Gamma'Gamma = r1'r1); r2 holds the
/// eigenvectors of r1 F F' r1', ordered by descending eigenvalue with the
/// largest-magnitude entry of each eigenvector made positive; the
/// rotation is r1^{-1} r2.
inline RotationMatrix rotation_matrix(const Matrix& gamma, const Matrix& factors, double rank_tol = 1e-10) {
  if (gamma.cols() != factors.rows()) throw std::invalid_argument("gamma/factor dimension mismatch");
  if (!(factors.cwiseAbs().maxCoeff() > 0.0)) throw std::invalid_argument("factor path is identically zero");
  const int k = static_cast<int>(gamma.cols());
  const Matrix gtg = gamma.transpose() * gamma;
  {
    Eigen::SelfAdjointEigenSolver<Matrix> gg(gtg);
    if (!(gg.eigenvalues()(0) > rank_tol * gg.eigenvalues()(k - 1)))
      throw std::runtime_error("mapping matrix is rank deficient: Gamma'Gamma is not positive definite");
  }
  Eigen::LLT<Matrix> llt(gtg);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("mapping matrix is rank deficient: Gamma'Gamma is not positive definite");
  const Matrix r1 = llt.matrixU();

  Matrix m = r1 * (factors * factors.transpose()) * r1.transpose();
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed in normalization");

  // descending eigenvalue order
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return eig.eigenvalues()(a) > eig.eigenvalues()(b); });
  Matrix r2(k, k);
  for (int j = 0; j < k; ++j) {
    r2.col(j) = eig.eigenvectors().col(order[j]);
    Eigen::Index at = 0;
    r2.col(j).cwiseAbs().maxCoeff(&at);
    if (r2(at, j) < 0.0) r2.col(j) *= -1.0;
  }

  RotationMatrix rot;
  rot.r = r1.triangularView<Eigen::Upper>().solve(r2);
  return rot;
}

/// Apply the normalizing rotation: (Gamma R, R^{-1} F).
inline IpcaParams normalize(const IpcaParams& params) {
  const RotationMatrix rot = rotation_matrix(params.gamma, params.factors);
  IpcaParams out;
  out.gamma = params.gamma * rot.r;
  out.factors = rot.r.partialPivLu().solve(params.factors);
  out.periods = params.periods;
  return out;
}

}  // namespace cscipca
