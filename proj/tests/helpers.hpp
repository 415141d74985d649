#pragma once

// Shared builders for synthetic panels used across the test suite.

#include <string>
#include <vector>

#include "cscipca/cscipca.hpp"

namespace testutil {

using cscipca::Matrix;
using cscipca::PanelData;
using cscipca::Rng;
using cscipca::Vector;

/// Random matrix with standard normal entries.
inline Matrix randn(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

struct PanelSpec {
  int n_treat = 2;
  int n_ctrl = 6;
  int t_pre = 5;
  int t_post = 3;
  int l = 3;
  int k = 2;
  double noise_sd = 0.0;
  double effect = 0.0;  // constant effect added to treated post outcomes
  std::uint64_t seed = 1;
};

/// Exact factor-structure panel Y = X Gamma F' (+ noise, + effect on the
/// treated post block). Every unit shares the same mapping matrix.
struct StructuredPanel {
  PanelData panel;
  Matrix gamma;    // L x K
  Matrix factors;  // K x T
};

inline StructuredPanel make_structured_panel(const PanelSpec& spec) {
  Rng rng(spec.seed);
  const int n = spec.n_treat + spec.n_ctrl;
  const int t = spec.t_pre + spec.t_post;
  Matrix gamma = randn(spec.l, spec.k, rng);
  Matrix factors = randn(spec.k, t, rng);
  std::vector<Matrix> x(t);
  for (int s = 0; s < t; ++s) x[s] = randn(n, spec.l, rng);
  Matrix y(n, t);
  Eigen::MatrixXi d = Eigen::MatrixXi::Zero(n, t);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) {
      y(i, s) = (x[s].row(i) * gamma).dot(factors.col(s)) + spec.noise_sd * rng.normal();
      if (i < spec.n_treat && s >= spec.t_pre) {
        y(i, s) += spec.effect;
        d(i, s) = 1;
      }
    }
  std::vector<std::string> units, times;
  for (int i = 0; i < spec.n_treat; ++i) units.push_back("T" + std::to_string(i + 1));
  for (int i = 0; i < spec.n_ctrl; ++i) units.push_back("C" + std::to_string(i + 1));
  for (int s = 0; s < t; ++s) times.push_back(std::to_string(s + 1));
  StructuredPanel out{PanelData::from_parts(units, times, std::move(y), std::move(x), std::move(d)), gamma, factors};
  return out;
}

/// Minimal panel from explicit outcome/treatment matrices with
/// standard-normal covariates.
inline PanelData panel_from_matrices(const Matrix& y, const Eigen::MatrixXi& d, int l, std::uint64_t seed = 7) {
  Rng rng(seed);
  const int n = static_cast<int>(y.rows());
  const int t = static_cast<int>(y.cols());
  std::vector<Matrix> x(t);
  for (int s = 0; s < t; ++s) x[s] = randn(n, l, rng);
  std::vector<std::string> units, times;
  for (int i = 0; i < n; ++i) units.push_back("u" + std::to_string(i + 1));
  for (int s = 0; s < t; ++s) times.push_back(std::to_string(s + 1));
  return PanelData::from_parts(units, times, y, x, d);
}

}  // namespace testutil
