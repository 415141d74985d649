#pragma once

// Comparator estimators for the bias study.
//
// fit_ife: interactive fixed effects, Y_it = Lambda_i F_t + X_it beta + e.
// Controls are fit by alternating pooled OLS for beta with a rank-k
// truncated SVD for (Lambda, F); treated loadings come from pre-period
// OLS on the estimated factors.
//
// fit_scm: per-treated-unit convex weights over controls minimizing
// pre-period outcome MSE, solved by Frank-Wolfe with exact line search.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cscipca/csc.hpp"
#include "cscipca/linalg.hpp"
#include "cscipca/panel.hpp"

namespace cscipca {

struct IfeConfig {
  double tol = 1e-6;
  int max_iter = 1000;
  double rank_tol = 1e-10;
};

struct IfeFit {
  Vector beta;      // L
  Matrix loadings;  // N x K in panel unit order (controls fit, treated refit)
  Matrix factors;   // K x T
  Vector att;
  Matrix effects;
  Matrix y0_hat;
  std::vector<int> post_columns;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_path;  // control SSE after each outer iteration
  Vector actual_mean;  // treated-group means per period, full T
  Vector model_mean;
};

inline IfeFit fit_ife(const PanelData& panel, int k, const IfeConfig& config = {}) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  const TreatmentPattern pattern = classify_treatment(panel);
  const SplitViews views = split(panel, pattern);
  const int t = panel.n_periods();
  const int l = panel.n_covariates();
  const int nc = pattern.n_ctrl();
  if (k > std::min(nc, t)) throw std::invalid_argument("k exceeds control panel dimensions");

  Matrix yc(nc, t);
  std::vector<Matrix> xc(t, Matrix(nc, l));
  for (int j = 0; j < nc; ++j) {
    const int i = pattern.control_units[j];
    yc.row(j) = panel.y.row(i);
    for (int s = 0; s < t; ++s) xc[s].row(j) = panel.x[s].row(i);
  }

  Matrix xtx = Matrix::Zero(l, l);
  for (int s = 0; s < t; ++s) xtx += xc[s].transpose() * xc[s];

  Vector beta = Vector::Zero(l);
  Matrix lf = Matrix::Zero(nc, t);
  Matrix loadings_c(nc, k), factors(k, t);
  IfeFit fit;
  Matrix lf_prev;
  Vector beta_prev;
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    Vector xty = Vector::Zero(l);
    for (int s = 0; s < t; ++s) xty += xc[s].transpose() * (yc.col(s) - lf.col(s));
    beta = spd_solve(xtx, xty, config.rank_tol);

    Matrix resid(nc, t);
    for (int s = 0; s < t; ++s) resid.col(s) = yc.col(s) - xc[s] * beta;
    Eigen::JacobiSVD<Matrix> svd(resid, Eigen::ComputeThinU | Eigen::ComputeThinV);
    loadings_c = svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal();
    factors = svd.matrixV().leftCols(k).transpose();
    canonicalize_signs(loadings_c, factors);
    Matrix lf_new = loadings_c * factors;

    double sse = 0.0;
    for (int s = 0; s < t; ++s) sse += (yc.col(s) - xc[s] * beta - lf_new.col(s)).squaredNorm();
    fit.objective_path.push_back(sse);
    fit.iterations = iter;
    if (iter > 1) {
      const double rel = std::max((beta - beta_prev).norm() / (beta_prev.norm() + 1e-12),
                                  (lf_new - lf_prev).norm() / (lf_prev.norm() + 1e-12));
      if (rel < config.tol) {
        lf = std::move(lf_new);
        fit.converged = true;
        break;
      }
    }
    beta_prev = beta;
    lf_prev = lf_new;
    lf = std::move(lf_new);
  }

  // treated loadings: pre-period OLS of residuals on the factor path
  const int n_treat = pattern.n_treat();
  Matrix loadings(panel.n_units(), k);
  for (int j = 0; j < nc; ++j) loadings.row(pattern.control_units[j]) = loadings_c.row(j);
  for (int j = 0; j < n_treat; ++j) {
    const int i = pattern.treated_units[j];
    const int pre = pattern.t_pre[j];
    Matrix f_pre = factors.leftCols(pre);  // k x pre
    Vector r(pre);
    for (int s = 0; s < pre; ++s) r(s) = panel.y(i, s) - panel.x_row(i, s).dot(beta);
    loadings.row(i) = spd_solve(f_pre * f_pre.transpose(), f_pre * r, config.rank_tol).transpose();
  }

  Vector y0_cells(views.treat_post.cells.size());
  for (std::size_t c = 0; c < views.treat_post.cells.size(); ++c) {
    const Cell& cell = views.treat_post.cells[c];
    y0_cells(c) = panel.x_row(cell.unit, cell.period).dot(beta) + loadings.row(cell.unit).dot(factors.col(cell.period));
  }
  AttSeries series = att_series(panel, pattern, views.treat_post, y0_cells);

  fit.beta = beta;
  fit.loadings = loadings;
  fit.factors = factors;
  fit.att = std::move(series.att);
  fit.effects = std::move(series.effects);
  fit.post_columns = std::move(series.post_columns);
  fit.y0_hat = Matrix::Constant(fit.effects.rows(), fit.effects.cols(), std::numeric_limits<double>::quiet_NaN());
  {
    std::vector<int> row_of(panel.n_units(), -1);
    for (int j = 0; j < n_treat; ++j) row_of[pattern.treated_units[j]] = j;
    for (std::size_t c = 0; c < views.treat_post.cells.size(); ++c) {
      const Cell& cell = views.treat_post.cells[c];
      const int row = row_of[cell.unit];
      const int col = pattern.kind == TreatmentPattern::Kind::Block ? cell.period - pattern.block_t_pre()
                                                                    : cell.period - pattern.t_pre[row];
      fit.y0_hat(row, col) = y0_cells(c);
    }
  }
  fit.actual_mean.resize(t);
  fit.model_mean.resize(t);
  for (int s = 0; s < t; ++s) {
    double ya = 0.0, ym = 0.0;
    for (int i : pattern.treated_units) {
      ya += panel.y(i, s);
      ym += panel.x_row(i, s).dot(beta) + loadings.row(i).dot(factors.col(s));
    }
    fit.actual_mean(s) = ya / n_treat;
    fit.model_mean(s) = ym / n_treat;
  }
  return fit;
}

// ---------------------------------------------------------------------------

struct ScmConfig {
  double gap_tol = 1e-8;
  int max_iter = 10000;
};

struct ScmFit {
  Matrix weights;  // N_treat x N_ctrl, rows on the simplex
  Vector att;
  Matrix effects;
  Matrix y0_hat;
  std::vector<int> post_columns;
  Vector objective;  // final pre-period SSE per treated unit
  Vector actual_mean;
  Vector model_mean;
};

namespace detail {

/// min_w ||phi w - y||^2 over the simplex, Frank-Wolfe with exact line
/// search on the quadratic. The duality gap g'(w - e_j*) certifies
/// optimality. Always returns a feasible point.
inline Vector simplex_ls(const Matrix& phi, const Vector& y, const ScmConfig& config,
                         std::vector<double>* objective_path = nullptr) {
  const int m = static_cast<int>(phi.cols());
  Vector w = Vector::Constant(m, 1.0 / m);
  Vector pw = phi * w;
  if (objective_path) objective_path->push_back((pw - y).squaredNorm());
  for (int iter = 0; iter < config.max_iter; ++iter) {
    const Vector grad = 2.0 * phi.transpose() * (pw - y);
    Eigen::Index j = 0;
    grad.minCoeff(&j);
    const double gap = grad.dot(w) - grad(j);
    if (gap <= config.gap_tol) break;
    const Vector dir_img = phi.col(j) - pw;
    const double denom = 2.0 * dir_img.squaredNorm();
    if (!(denom > 0.0)) break;
    const double step = std::min(1.0, std::max(0.0, gap / denom));
    w *= (1.0 - step);
    w(j) += step;
    pw += step * dir_img;
    if (objective_path) objective_path->push_back((pw - y).squaredNorm());
  }
  // clean tiny numerical negatives and renormalize
  w = w.cwiseMax(0.0);
  w /= w.sum();
  return w;
}

}  // namespace detail

/// Abadie-style synthetic control on pre-period outcomes. Block
/// assignment only.
inline ScmFit fit_scm(const PanelData& panel, const ScmConfig& config = {}) {
  const TreatmentPattern pattern = classify_treatment(panel);
  if (pattern.kind != TreatmentPattern::Kind::Block)
    throw std::invalid_argument("synthetic control requires block treatment assignment");
  const SplitViews views = split(panel, pattern);
  const int t0 = pattern.block_t_pre();
  const int t = panel.n_periods();
  const int nc = pattern.n_ctrl();
  const int n_treat = pattern.n_treat();

  Matrix phi(t0, nc);  // control pre-period outcomes, one column per control
  for (int j = 0; j < nc; ++j)
    for (int s = 0; s < t0; ++s) phi(s, j) = panel.y(pattern.control_units[j], s);

  ScmFit fit;
  fit.weights.resize(n_treat, nc);
  fit.objective.resize(n_treat);
  for (int u = 0; u < n_treat; ++u) {
    Vector y_pre(t0);
    for (int s = 0; s < t0; ++s) y_pre(s) = panel.y(pattern.treated_units[u], s);
    const Vector w = detail::simplex_ls(phi, y_pre, config);
    fit.weights.row(u) = w.transpose();
    fit.objective(u) = (phi * w - y_pre).squaredNorm();
  }

  Vector y0_cells(views.treat_post.cells.size());
  std::vector<int> row_of(panel.n_units(), -1);
  for (int j = 0; j < n_treat; ++j) row_of[pattern.treated_units[j]] = j;
  for (std::size_t c = 0; c < views.treat_post.cells.size(); ++c) {
    const Cell& cell = views.treat_post.cells[c];
    double v = 0.0;
    for (int j = 0; j < nc; ++j) v += fit.weights(row_of[cell.unit], j) * panel.y(pattern.control_units[j], cell.period);
    y0_cells(c) = v;
  }
  AttSeries series = att_series(panel, pattern, views.treat_post, y0_cells);
  fit.att = std::move(series.att);
  fit.effects = std::move(series.effects);
  fit.post_columns = std::move(series.post_columns);
  fit.y0_hat = Matrix::Constant(n_treat, t - t0, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < views.treat_post.cells.size(); ++c) {
    const Cell& cell = views.treat_post.cells[c];
    fit.y0_hat(row_of[cell.unit], cell.period - t0) = y0_cells(c);
  }

  fit.actual_mean.resize(t);
  fit.model_mean.resize(t);
  for (int s = 0; s < t; ++s) {
    double ya = 0.0, ym = 0.0;
    for (int u = 0; u < n_treat; ++u) {
      ya += panel.y(pattern.treated_units[u], s);
      for (int j = 0; j < nc; ++j) ym += fit.weights(u, j) * panel.y(pattern.control_units[j], s);
    }
    fit.actual_mean(s) = ya / n_treat;
    fit.model_mean(s) = ym / n_treat;
  }
  return fit;
}

}  // namespace cscipca
