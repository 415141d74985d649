#pragma once

// Counterfactual pipeline:
//   step 1  ALS fit of (Gamma_ctrl, F) on the control group, full period
//   step 2  mapping-matrix refit on the treated pre-treatment cells
//   step 3  normalization of the treated pair
//   step 4  counterfactual imputation and per-period treatment effects
//
// Under staggered adoption each treated unit is imputed over its own
// post-period and effects are aligned in event time (periods since
// treatment), averaging over the units observed at each horizon.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cscipca/ipca.hpp"
#include "cscipca/normalization.hpp"
#include "cscipca/panel.hpp"

namespace cscipca {

struct CscFit {
  IpcaParams params_ctrl;      // step-1 estimate, factors over the full panel
  Matrix gamma_treat_norm;     // L x K
  Matrix factors_norm;         // K x T
  Matrix y0_hat;               // N_treat x H imputed counterfactuals (NaN where unobserved)
  Vector att;                  // H
  Matrix effects;              // N_treat x H
  std::vector<int> post_columns;  // calendar period per column (Block) or event horizon (Staggered)
  double pre_fit_rmse = 0.0;
  bool pre_fit_warning = false;
  FitDiagnostics diagnostics;
  TreatmentPattern pattern;
  Vector actual_mean;  // treated-group mean outcome per period, full T
  Vector model_mean;   // treated-group mean structural value per period, full T
};

/// Cellwise counterfactual X_it Gamma F_t'; one value per cell, in cell order.
inline Vector impute(const Matrix& gamma, const Matrix& factors, const std::vector<int>& periods,
                     const PanelData& panel, const CellSet& cells) {
  IpcaParams p;
  p.gamma = gamma;
  p.factors = factors;
  p.periods = periods;
  Vector out(cells.cells.size());
  for (std::size_t j = 0; j < cells.cells.size(); ++j) {
    const Cell& c = cells.cells[j];
    out(j) = structural_value(panel.x_row(c.unit, c.period), gamma, factors.col(p.factor_column(c.period)));
  }
  return out;
}

struct AttSeries {
  Vector att;
  Matrix effects;                 // N_treat x H, NaN where a unit is unobserved
  std::vector<int> post_columns;  // calendar periods (Block) or event horizons 1..H (Staggered)
};

/// Per-period ATT from observed treated outcomes and imputed
/// counterfactuals. `y0_cells` pairs with `treat_post.cells`.
inline AttSeries att_series(const PanelData& panel, const TreatmentPattern& pattern, const CellSet& treat_post,
                            const Vector& y0_cells) {
  if (static_cast<Eigen::Index>(treat_post.cells.size()) != y0_cells.size())
    throw std::invalid_argument("att_series: counterfactual count does not match cell count");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const int n_treat = pattern.n_treat();
  std::vector<int> row_of(panel.n_units(), -1);
  for (int j = 0; j < n_treat; ++j) row_of[pattern.treated_units[j]] = j;

  AttSeries out;
  if (pattern.kind == TreatmentPattern::Kind::Block) {
    const int t0 = pattern.block_t_pre();
    const int h = panel.n_periods() - t0;
    out.effects = Matrix::Constant(n_treat, h, nan);
    out.post_columns.resize(h);
    for (int c = 0; c < h; ++c) out.post_columns[c] = t0 + c;
    for (std::size_t j = 0; j < treat_post.cells.size(); ++j) {
      const Cell& c = treat_post.cells[j];
      out.effects(row_of[c.unit], c.period - t0) = panel.y(c.unit, c.period) - y0_cells(j);
    }
  } else {
    // event time: horizon 1 is the first treated period of each unit
    std::vector<int> first(panel.n_units(), -1);
    for (int j = 0; j < n_treat; ++j) first[pattern.treated_units[j]] = pattern.t_pre[j];
    int h = 0;
    for (int j = 0; j < n_treat; ++j) h = std::max(h, panel.n_periods() - pattern.t_pre[j]);
    out.effects = Matrix::Constant(n_treat, h, nan);
    out.post_columns.resize(h);
    for (int c = 0; c < h; ++c) out.post_columns[c] = c + 1;
    for (std::size_t j = 0; j < treat_post.cells.size(); ++j) {
      const Cell& c = treat_post.cells[j];
      out.effects(row_of[c.unit], c.period - first[c.unit]) = panel.y(c.unit, c.period) - y0_cells(j);
    }
  }
  out.att.resize(out.effects.cols());
  for (Eigen::Index c = 0; c < out.effects.cols(); ++c) {
    double sum = 0.0;
    int n = 0;
    for (Eigen::Index r = 0; r < out.effects.rows(); ++r)
      if (!std::isnan(out.effects(r, c))) {
        sum += out.effects(r, c);
        ++n;
      }
    out.att(c) = sum / n;
  }
  return out;
}

/// Run the full pipeline. `pre_fit_warn_sd` scales the advisory
/// poor-pre-fit threshold (multiples of the control outcome SD).
inline CscFit estimate(const PanelData& panel, const FitConfig& config, double pre_fit_warn_sd = 1.0) {
  const TreatmentPattern pattern = classify_treatment(panel);
  const SplitViews views = split(panel, pattern);

  CscFit fit;
  fit.pattern = pattern;
  auto [params_ctrl, diag] = fit_als(panel, views.ctrl_all, config);
  fit.params_ctrl = std::move(params_ctrl);
  fit.diagnostics = std::move(diag);

  const Matrix gamma_treat = fit_gamma_given_factors(panel, views.treat_pre, fit.params_ctrl, config);

  IpcaParams treated_pair;
  treated_pair.gamma = gamma_treat;
  treated_pair.factors = fit.params_ctrl.factors;
  treated_pair.periods = fit.params_ctrl.periods;
  const IpcaParams normed = normalize(treated_pair);
  fit.gamma_treat_norm = normed.gamma;
  fit.factors_norm = normed.factors;

  const Vector y0_cells = impute(normed.gamma, normed.factors, normed.periods, panel, views.treat_post);
  AttSeries series = att_series(panel, pattern, views.treat_post, y0_cells);
  fit.att = std::move(series.att);
  fit.effects = std::move(series.effects);
  fit.post_columns = std::move(series.post_columns);

  fit.y0_hat = Matrix::Constant(fit.effects.rows(), fit.effects.cols(), std::numeric_limits<double>::quiet_NaN());
  {
    std::vector<int> row_of(panel.n_units(), -1);
    for (int j = 0; j < pattern.n_treat(); ++j) row_of[pattern.treated_units[j]] = j;
    for (std::size_t j = 0; j < views.treat_post.cells.size(); ++j) {
      const Cell& c = views.treat_post.cells[j];
      const int row = row_of[c.unit];
      const int col = pattern.kind == TreatmentPattern::Kind::Block ? c.period - pattern.block_t_pre()
                                                                    : c.period - pattern.t_pre[row];
      fit.y0_hat(row, col) = y0_cells(j);
    }
  }

  const Vector pre_fitted = impute(normed.gamma, normed.factors, normed.periods, panel, views.treat_pre);
  double sse = 0.0;
  for (std::size_t j = 0; j < views.treat_pre.cells.size(); ++j) {
    const Cell& c = views.treat_pre.cells[j];
    const double r = panel.y(c.unit, c.period) - pre_fitted(j);
    sse += r * r;
  }
  fit.pre_fit_rmse = std::sqrt(sse / static_cast<double>(views.treat_pre.cells.size()));

  double ctrl_mean = 0.0, ctrl_m2 = 0.0;
  const double n_ctrl_cells = static_cast<double>(pattern.n_ctrl()) * panel.n_periods();
  for (int i : pattern.control_units)
    for (int s = 0; s < panel.n_periods(); ++s) ctrl_mean += panel.y(i, s);
  ctrl_mean /= n_ctrl_cells;
  for (int i : pattern.control_units)
    for (int s = 0; s < panel.n_periods(); ++s) ctrl_m2 += (panel.y(i, s) - ctrl_mean) * (panel.y(i, s) - ctrl_mean);
  fit.pre_fit_warning = fit.pre_fit_rmse > pre_fit_warn_sd * std::sqrt(ctrl_m2 / n_ctrl_cells);

  fit.actual_mean.resize(panel.n_periods());
  fit.model_mean.resize(panel.n_periods());
  for (int s = 0; s < panel.n_periods(); ++s) {
    double ya = 0.0, ym = 0.0;
    for (int i : pattern.treated_units) {
      ya += panel.y(i, s);
      ym += structural_value(panel.x_row(i, s), fit.gamma_treat_norm, fit.factors_norm.col(s));
    }
    fit.actual_mean(s) = ya / pattern.n_treat();
    fit.model_mean(s) = ym / pattern.n_treat();
  }
  return fit;
}

}  // namespace cscipca
