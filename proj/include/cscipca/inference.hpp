#pragma once

// Conformal inference for the estimated treatment effect under a sharp
// null. The hypothesized effect path is subtracted from treated
// post-period outcomes, the mapping matrix is re-estimated on the full
// adjusted treated sample with control-fit factors held fixed, and the
// resulting residual path is block-permuted (all T cyclic shifts) to
// build the reference distribution for
//
//   S(u) = T_post^{-1/2} * sum over post periods of |u_t|^q.
//
// The identity shift is part of the permutation set, so p >= 1/T.
// Confidence bands invert the test per period over a grid of constant
// nulls. Block treatment assignment only.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cscipca/csc.hpp"
#include "cscipca/ipca.hpp"
#include "cscipca/panel.hpp"

namespace cscipca {

struct NullSpec {
  Vector theta0;  // hypothesized effect per post period, constant across units
};

struct ConformalResult {
  double p_value = std::numeric_limits<double>::quiet_NaN();
  double statistic = std::numeric_limits<double>::quiet_NaN();
  Vector permutation_statistics;  // one entry per cyclic shift, identity first
  Vector ci_lower, ci_upper;      // per post period when an interval was requested
  std::vector<unsigned char> ci_degenerate;
  double level = std::numeric_limits<double>::quiet_NaN();
};

/// S over a post-period residual vector (already averaged across treated
/// units per period).
inline double test_statistic(const Vector& residuals, double q = 1.0) {
  if (residuals.size() == 0) throw std::invalid_argument("empty residual vector");
  if (!(q >= 1.0)) throw std::invalid_argument("q must be at least 1");
  double s = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) s += std::pow(std::abs(residuals(i)), q);
  return s / std::sqrt(static_cast<double>(residuals.size()));
}

namespace detail {

/// p-value of the observed statistic against all T cyclic shifts of the
/// full residual path; the statistic window is the final t_post slots.
inline void pvalue_from_path(const Vector& u, int t_post, double q, ConformalResult& out) {
  const int t = static_cast<int>(u.size());
  if (t_post < 1 || t_post >= t) throw std::invalid_argument("need at least one pre and one post period");
  const int t_pre = t - t_post;
  out.permutation_statistics.resize(t);
  for (int shift = 0; shift < t; ++shift) {
    Vector window(t_post);
    for (int h = 0; h < t_post; ++h) window(h) = u((t_pre + h + shift) % t);
    out.permutation_statistics(shift) = test_statistic(window, q);
  }
  out.statistic = out.permutation_statistics(0);
  int count = 0;
  for (int shift = 0; shift < t; ++shift)
    if (out.permutation_statistics(shift) >= out.statistic) ++count;
  out.p_value = static_cast<double>(count) / t;
}

}  // namespace detail

/// Shared state for repeated p-value evaluations: the control fit does
/// not depend on the null, so interval inversion reuses it.
class ConformalEngine {
 public:
  ConformalEngine(const PanelData& panel, const FitConfig& config, double q = 1.0)
      : panel_(panel), config_(config), q_(q), pattern_(classify_treatment(panel)) {
    if (pattern_.kind != TreatmentPattern::Kind::Block)
      throw std::invalid_argument("conformal inference supports block treatment assignment only");
    views_ = split(panel, pattern_);
    t_pre_ = pattern_.block_t_pre();
    t_post_ = panel.n_periods() - t_pre_;
    auto [params, diag] = fit_als(panel, views_.ctrl_all, config);
    ctrl_params_ = std::move(params);
    for (const int i : pattern_.treated_units)
      for (int s = 0; s < panel.n_periods(); ++s) all_treated_.cells.push_back({i, s});
  }

  int t_post() const { return t_post_; }

  /// Point estimate of the per-period ATT (pre-period mapping refit, as
  /// in the estimation pipeline; rotation does not affect it).
  Vector att_estimate() const {
    const Matrix gamma = fit_gamma_given_factors(panel_, views_.treat_pre, ctrl_params_, config_);
    Vector att(t_post_);
    for (int h = 0; h < t_post_; ++h) {
      const int s = t_pre_ + h;
      double v = 0.0;
      for (const int i : pattern_.treated_units)
        v += panel_.y(i, s) - structural_value(panel_.x_row(i, s), gamma, ctrl_params_.factors.col(s));
      att(h) = v / pattern_.n_treat();
    }
    return att;
  }

  /// SD over pre periods of the unit-averaged pre-treatment residual path
  /// from the point fit; sets the default grid scale.
  double pre_residual_sd() const {
    const Matrix gamma = fit_gamma_given_factors(panel_, views_.treat_pre, ctrl_params_, config_);
    Vector u(t_pre_);
    for (int s = 0; s < t_pre_; ++s) {
      double v = 0.0;
      for (const int i : pattern_.treated_units)
        v += panel_.y(i, s) - structural_value(panel_.x_row(i, s), gamma, ctrl_params_.factors.col(s));
      u(s) = v / pattern_.n_treat();
    }
    const double mean = u.mean();
    return std::sqrt((u.array() - mean).square().sum() / t_pre_);
  }

  ConformalResult pvalue(const Vector& theta0) const {
    if (static_cast<int>(theta0.size()) != t_post_)
      throw std::invalid_argument("null path length must equal the number of post periods");
    // adjusted outcomes: subtract the null from treated post periods
    PanelData adjusted = panel_;
    for (const int i : pattern_.treated_units)
      for (int h = 0; h < t_post_; ++h) adjusted.y(i, t_pre_ + h) -= theta0(h);

    const Matrix gamma = update_gamma(ctrl_params_.factors, ctrl_params_.periods, adjusted, all_treated_,
                                      config_.rank_tol);
    Vector u(panel_.n_periods());
    for (int s = 0; s < panel_.n_periods(); ++s) {
      double v = 0.0;
      for (const int i : pattern_.treated_units)
        v += adjusted.y(i, s) - structural_value(adjusted.x_row(i, s), gamma, ctrl_params_.factors.col(s));
      u(s) = v / pattern_.n_treat();
    }
    ConformalResult res;
    detail::pvalue_from_path(u, t_post_, q_, res);
    return res;
  }

 private:
  PanelData panel_;
  FitConfig config_;
  double q_;
  TreatmentPattern pattern_;
  SplitViews views_;
  int t_pre_ = 0, t_post_ = 0;
  IpcaParams ctrl_params_;
  CellSet all_treated_;
};

inline ConformalResult conformal_pvalue(const PanelData& panel, const NullSpec& null, const FitConfig& config,
                                        double q = 1.0) {
  return ConformalEngine(panel, config, q).pvalue(null.theta0);
}

/// Default inversion grid: 41 points spanning the estimated effect range
/// widened by five pre-period residual SDs.
inline std::vector<double> default_conformal_grid(const ConformalEngine& engine, int n_points = 41,
                                                  double span_sds = 5.0) {
  const Vector att = engine.att_estimate();
  const double sd = std::max(engine.pre_residual_sd(), 1e-12 + 1e-9 * att.cwiseAbs().maxCoeff());
  const double lo = att.minCoeff() - span_sds * sd;
  const double hi = att.maxCoeff() + span_sds * sd;
  std::vector<double> grid(n_points);
  for (int i = 0; i < n_points; ++i) grid[i] = lo + (hi - lo) * i / (n_points - 1);
  return grid;
}

/// Per-period confidence band by test inversion: period s keeps the grid
/// values whose constant null is not rejected at significance 1 - level,
/// with the other periods held at the point estimate. An empty
/// non-rejected set is reported as the max-p grid point and flagged.
inline ConformalResult confidence_interval(const PanelData& panel, const std::vector<double>& grid, double level,
                                           const FitConfig& config, double q = 1.0) {
  if (grid.size() < 2) throw std::invalid_argument("grid needs at least two points");
  if (!(level > 0.0) || !(level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
  std::vector<double> sorted(grid);
  std::sort(sorted.begin(), sorted.end());

  const ConformalEngine engine(panel, config, q);
  const Vector att = engine.att_estimate();
  const int t_post = engine.t_post();
  const double alpha = 1.0 - level;

  ConformalResult out;
  out.level = level;
  out.ci_lower.resize(t_post);
  out.ci_upper.resize(t_post);
  out.ci_degenerate.assign(t_post, 0);
  for (int s = 0; s < t_post; ++s) {
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();
    double best_p = -1.0, best_g = sorted.front();
    bool any = false;
    for (const double g : sorted) {
      Vector theta = att;
      theta(s) = g;
      const double p = engine.pvalue(theta).p_value;
      if (p > best_p) {
        best_p = p;
        best_g = g;
      }
      if (p > alpha) {
        if (!any) lo = g;
        hi = g;
        any = true;
      }
    }
    if (!any) {
      lo = hi = best_g;
      out.ci_degenerate[s] = 1;
    }
    out.ci_lower(s) = lo;
    out.ci_upper(s) = hi;
  }
  return out;
}

}  // namespace cscipca
