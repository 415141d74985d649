#pragma once

// Alternating least squares for the instrumented factor model
//
//   Y_it = (X_it * Gamma) * F_t' + e_it
//
// Gamma (L x K) maps covariates to factor loadings; F (K x T) is the
// latent factor path. Each update is an exact coordinate minimizer of the
// sum of squared residuals, so the objective is non-increasing across
// iterations. Estimation is deterministic: identical inputs give
// bit-identical outputs.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cscipca/linalg.hpp"
#include "cscipca/panel.hpp"
#include "cscipca/rng.hpp"

namespace cscipca {

struct FitConfig {
  int k = 1;
  double tol = 1e-6;        // relative parameter-change threshold
  int max_iter = 1000;
  std::uint64_t seed = 0;   // used only by randomized restarts
  double rank_tol = 1e-10;  // eigenvalue cutoff factor for pseudo-inverse
  int n_restarts = 0;       // extra ALS runs from random orthonormal Gamma

  void validate(int l, int t, int n) const {
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (k > std::min({l, t, n}))
      throw std::invalid_argument("k = " + std::to_string(k) + " exceeds min(L, T, N) = " +
                                  std::to_string(std::min({l, t, n})));
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
  }
};

struct IpcaParams {
  Matrix gamma;              // L x K
  Matrix factors;            // K x P, column j is the factor at periods[j]
  std::vector<int> periods;  // panel period index per factor column

  int factor_column(int period) const {
    for (std::size_t j = 0; j < periods.size(); ++j)
      if (periods[j] == period) return static_cast<int>(j);
    throw std::invalid_argument("no factor estimate for period index " + std::to_string(period));
  }
};

struct FitDiagnostics {
  int iterations = 0;
  std::vector<double> objective_path;  // objective after each (Gamma, F) sweep
  bool converged = false;
  double final_rel_change = std::numeric_limits<double>::quiet_NaN();
  int pinv_fallbacks = 0;  // rank-deficient normal equations encountered
};

namespace detail {

/// Materialized rectangular sub-panel; factor columns align with `periods`.
struct RectData {
  Matrix y;               // n x p
  std::vector<Matrix> x;  // p slices, n x L
  std::vector<int> periods;
};

inline RectData gather(const PanelData& panel, const PanelView& view) {
  RectData d;
  const int n = static_cast<int>(view.units.size());
  const int p = static_cast<int>(view.periods.size());
  const int l = panel.n_covariates();
  d.y.resize(n, p);
  d.x.assign(p, Matrix(n, l));
  d.periods = view.periods;
  for (int j = 0; j < p; ++j) {
    const int s = view.periods[j];
    for (int i = 0; i < n; ++i) {
      d.y(i, j) = panel.y(view.units[i], s);
      d.x[j].row(i) = panel.x[s].row(view.units[i]);
    }
  }
  return d;
}

inline double relative_change(const Matrix& old_m, const Matrix& new_m) {
  return (new_m - old_m).norm() / (old_m.norm() + 1e-12);
}

inline void fix_row_signs(Matrix& factors) {
  for (Eigen::Index k = 0; k < factors.rows(); ++k) {
    Eigen::Index at = 0;
    factors.row(k).cwiseAbs().maxCoeff(&at);
    if (factors(k, at) < 0.0) factors.row(k) *= -1.0;
  }
}

}  // namespace detail

/// Sum of squared residuals over a rectangular sub-panel; factors column j
/// must correspond to data column j.
inline double objective(const Matrix& gamma, const Matrix& factors, const detail::RectData& d) {
  if (factors.cols() != d.y.cols() || gamma.rows() != d.x.front().cols() || gamma.cols() != factors.rows())
    throw std::invalid_argument("objective: dimension mismatch");
  double sse = 0.0;
  for (Eigen::Index j = 0; j < d.y.cols(); ++j) {
    const Vector r = d.y.col(j) - d.x[j] * (gamma * factors.col(j));
    sse += r.squaredNorm();
  }
  return sse;
}

inline double objective(const IpcaParams& params, const PanelData& panel, const PanelView& view) {
  detail::RectData d = detail::gather(panel, view);
  Matrix f(params.gamma.cols(), d.periods.size());
  for (std::size_t j = 0; j < d.periods.size(); ++j) f.col(j) = params.factors.col(params.factor_column(d.periods[j]));
  return objective(params.gamma, f, d);
}

/// Objective over a ragged cell set, with factors indexed by panel period.
inline double objective(const IpcaParams& params, const PanelData& panel, const CellSet& cells) {
  double sse = 0.0;
  for (const Cell& c : cells.cells) {
    const double r =
        panel.y(c.unit, c.period) -
        structural_value(panel.x_row(c.unit, c.period), params.gamma, params.factors.col(params.factor_column(c.period)));
    sse += r * r;
  }
  return sse;
}

/// Factor-path seed: top-k right singular directions of the outcome
/// matrix, scaled by their singular values (one column per period). The
/// largest-magnitude entry of each component is made positive.
inline Matrix init_factors_pca(const Matrix& y, int k, double rank_tol = 1e-10) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (k > std::min(y.rows(), y.cols()))
    throw std::invalid_argument("k exceeds outcome matrix dimensions");
  Eigen::JacobiSVD<Matrix> svd(y, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(k - 1) <= rank_tol * sv(0))
    throw std::invalid_argument("requested " + std::to_string(k) + " components but outcome matrix has lower numerical rank");
  Matrix factors = sv.head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
  detail::fix_row_signs(factors);
  return factors;
}

/// Cross-sectional OLS for one period: F_t = (G'X'XG)^{-1} G'X'y with
/// G = gamma. Pseudo-inverse at rank_tol when the design is singular.
inline Vector update_factors(const Matrix& gamma, const Matrix& x_t, const Vector& y_t, double rank_tol = 1e-10,
                             bool* truncated = nullptr) {
  const Matrix z = x_t * gamma;  // n x K
  if (z.cwiseAbs().maxCoeff() == 0.0)
    throw std::runtime_error("degenerate period: instrumented loadings are identically zero");
  return spd_solve(z.transpose() * z, z.transpose() * y_t, rank_tol, truncated);
}

namespace detail {

// Pooled OLS of y against the LK regressors kron(F_t', X_it). The
// vectorization stacks columns of Gamma: gamma_vec[k * L + l] = Gamma(l, k),
// matching Eigen's column-major reshape. Verified against the
// objective-decrease property in the test suite.
struct GammaNormalEq {
  Matrix a;
  Vector b;
  int l, k;

  GammaNormalEq(int l_, int k_) : a(Matrix::Zero(l_ * k_, l_ * k_)), b(Vector::Zero(l_ * k_)), l(l_), k(k_) {}

  /// Accumulate one period's cross-section in blocked form:
  /// A += kron(f f', X'X), b += kron(f, X'y).
  void add_period(const Matrix& x_t, const Vector& y_t, const Vector& f_t) {
    const Matrix xtx = x_t.transpose() * x_t;
    const Vector xty = x_t.transpose() * y_t;
    for (int k1 = 0; k1 < k; ++k1) {
      for (int k2 = 0; k2 < k; ++k2) a.block(k1 * l, k2 * l, l, l) += f_t(k1) * f_t(k2) * xtx;
      b.segment(k1 * l, l) += f_t(k1) * xty;
    }
  }

  void add_cell(const Eigen::RowVectorXd& x_it, double y_it, const Vector& f_t) {
    Vector z(l * k);
    for (int k1 = 0; k1 < k; ++k1) z.segment(k1 * l, l) = f_t(k1) * x_it.transpose();
    a.noalias() += z * z.transpose();
    b.noalias() += z * y_it;
  }

  Matrix solve(double rank_tol, bool* truncated) const {
    const Vector g = spd_solve(a, b, rank_tol, truncated);
    return Eigen::Map<const Matrix>(g.data(), l, k);
  }
};

}  // namespace detail

/// Mapping-matrix update over a rectangular sub-panel with factors held
/// fixed (column j of factors pairs with data column j).
inline Matrix update_gamma(const Matrix& factors, const detail::RectData& d, double rank_tol = 1e-10,
                           bool* truncated = nullptr) {
  const int l = static_cast<int>(d.x.front().cols());
  const int k = static_cast<int>(factors.rows());
  detail::GammaNormalEq eq(l, k);
  for (Eigen::Index j = 0; j < d.y.cols(); ++j) eq.add_period(d.x[j], d.y.col(j), factors.col(j));
  return eq.solve(rank_tol, truncated);
}

/// Mapping-matrix update over an arbitrary cell set; factors indexed by
/// panel period through `periods`.
inline Matrix update_gamma(const Matrix& factors, const std::vector<int>& periods, const PanelData& panel,
                           const CellSet& cells, double rank_tol = 1e-10, bool* truncated = nullptr) {
  const int l = panel.n_covariates();
  const int k = static_cast<int>(factors.rows());
  std::map<int, int> col_of;
  for (std::size_t j = 0; j < periods.size(); ++j) col_of[periods[j]] = static_cast<int>(j);
  detail::GammaNormalEq eq(l, k);
  for (const Cell& c : cells.cells) {
    const auto it = col_of.find(c.period);
    if (it == col_of.end())
      throw std::invalid_argument("no factor estimate for period index " + std::to_string(c.period));
    eq.add_cell(panel.x_row(c.unit, c.period), panel.y(c.unit, c.period), factors.col(it->second));
  }
  return eq.solve(rank_tol, truncated);
}

namespace detail {

inline std::pair<IpcaParams, FitDiagnostics> als_loop(const RectData& d, Matrix factors, const FitConfig& config) {
  const int p = static_cast<int>(d.periods.size());
  IpcaParams params;
  params.periods = d.periods;
  FitDiagnostics diag;
  Matrix gamma_prev;
  Matrix gamma;
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    bool trunc = false;
    gamma = update_gamma(factors, d, config.rank_tol, &trunc);
    if (trunc) ++diag.pinv_fallbacks;
    Matrix factors_new(config.k, p);
    for (int j = 0; j < p; ++j) {
      bool ft = false;
      factors_new.col(j) = update_factors(gamma, d.x[j], d.y.col(j), config.rank_tol, &ft);
      if (ft) ++diag.pinv_fallbacks;
    }
    diag.objective_path.push_back(objective(gamma, factors_new, d));
    diag.iterations = iter;
    double rel = relative_change(factors, factors_new);
    if (iter > 1) rel = std::max(rel, relative_change(gamma_prev, gamma));
    gamma_prev = gamma;
    factors = std::move(factors_new);
    diag.final_rel_change = rel;
    if (rel < config.tol) {
      diag.converged = true;
      break;
    }
  }
  params.gamma = gamma;
  params.factors = factors;
  return {std::move(params), std::move(diag)};
}

inline Matrix random_orthonormal(int rows, int cols, Rng& rng) {
  Matrix g(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  return q;
}

}  // namespace detail

/// ALS fit of (Gamma, F) on a rectangular sub-panel, seeded with the PCA
/// factor initialization. Alternates the two closed-form updates until the
/// larger of the two relative Frobenius parameter changes drops below
/// config.tol. With n_restarts > 0, additional runs start from random
/// orthonormal Gamma draws and the lowest-objective fit wins.
inline std::pair<IpcaParams, FitDiagnostics> fit_als(const PanelData& panel, const PanelView& view,
                                                     const FitConfig& config) {
  config.validate(panel.n_covariates(), static_cast<int>(view.periods.size()), static_cast<int>(view.units.size()));
  const detail::RectData d = detail::gather(panel, view);
  auto best = detail::als_loop(d, init_factors_pca(d.y, config.k, config.rank_tol), config);
  for (int r = 0; r < config.n_restarts; ++r) {
    Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(r) + 1);
    Matrix gamma0 = detail::random_orthonormal(panel.n_covariates(), config.k, rng);
    Matrix f0(config.k, d.periods.size());
    for (std::size_t j = 0; j < d.periods.size(); ++j)
      f0.col(j) = update_factors(gamma0, d.x[j], d.y.col(j), config.rank_tol);
    auto run = detail::als_loop(d, std::move(f0), config);
    if (run.second.objective_path.back() < best.second.objective_path.back()) best = std::move(run);
  }
  return best;
}

/// Single mapping-matrix update on a cell set with factors held fixed
/// (the treated-group refit). Fails when the cell count cannot identify
/// the L*K parameters.
inline Matrix fit_gamma_given_factors(const PanelData& panel, const CellSet& cells, const IpcaParams& factors_fit,
                                      const FitConfig& config, bool* truncated = nullptr) {
  const int l = panel.n_covariates();
  if (static_cast<int>(cells.cells.size()) < l * config.k)
    throw std::invalid_argument("underdetermined system: " + std::to_string(cells.cells.size()) + " cells for " +
                                std::to_string(l * config.k) + " parameters; reduce k");
  return update_gamma(factors_fit.factors, factors_fit.periods, panel, cells, config.rank_tol, truncated);
}

}  // namespace cscipca
