#pragma once

// Data-driven choice of the number of latent factors K.
//
// tune_bootstrap: cluster bootstrap over units. Each replication
// resamples N_ctrl control units (with replacement) as training and
// N_treat treated units as validation, fits the factor model on
// training, refits the mapping matrix on the validation pre-period with
// factors held fixed, and scores the validation pre-period SSE.
//
// tune_loo: leave-one-period-out over the pre-treatment window. Period t
// is dropped from the control training panel; the held-out factor F_t is
// recovered from the period-t control cross-section; the mapping matrix
// is refit on the remaining treated pre-periods; the score is the SSE on
// treated cells at t.
//
// Neither procedure ever evaluates a post-treatment treated cell.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cscipca/ipca.hpp"
#include "cscipca/panel.hpp"
#include "cscipca/rng.hpp"

namespace cscipca {

enum class TuneMethod { Bootstrap, LeaveOneOut };

struct TuneResult {
  int k_best = 0;
  Vector mse_by_k;  // entry k-1 holds the mean validation SSE for k factors
  TuneMethod method = TuneMethod::Bootstrap;
  int n_reps = 0;
  std::uint64_t seed = 0;
  int redraws = 0;  // degenerate bootstrap samples that were redrawn
};

namespace detail {

/// Smallest k attaining the minimum MSE, treating differences below a
/// scale-relative floor as ties (floating-point fits of nested models
/// can differ only in the last digits).
inline int argmin_with_ties(const Vector& mse, double scale) {
  const double tol = 1e-7 * std::max(scale, 1e-300);
  const double lo = mse.minCoeff();
  for (Eigen::Index i = 0; i < mse.size(); ++i)
    if (mse(i) <= lo + tol) return static_cast<int>(i) + 1;
  return 1;
}

inline double treat_pre_scale(const PanelData& panel, const CellSet& treat_pre) {
  double s = 0.0;
  for (const Cell& c : treat_pre.cells) s += panel.y(c.unit, c.period) * panel.y(c.unit, c.period);
  return s / static_cast<double>(treat_pre.cells.size());
}

inline void check_kmax(const PanelData& panel, const TreatmentPattern& pattern, int k_max) {
  const int t_pre_min = *std::min_element(pattern.t_pre.begin(), pattern.t_pre.end());
  const int bound = std::min({panel.n_covariates(), t_pre_min, pattern.n_ctrl()});
  if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
  if (k_max > bound)
    throw std::invalid_argument("k_max = " + std::to_string(k_max) + " exceeds min(L, T_pre, N_ctrl) = " +
                                std::to_string(bound));
}

}  // namespace detail

inline TuneResult tune_bootstrap(const PanelData& panel, int k_max, int n_reps, const FitConfig& config,
                                 std::uint64_t seed, int threads = 1) {
  const TreatmentPattern pattern = classify_treatment(panel);
  detail::check_kmax(panel, pattern, k_max);
  if (n_reps < 1) throw std::invalid_argument("n_reps must be at least 1");
  const SplitViews views = split(panel, pattern);

  std::vector<int> all_periods(panel.n_periods());
  for (int s = 0; s < panel.n_periods(); ++s) all_periods[s] = s;

  const std::size_t jobs = static_cast<std::size_t>(k_max) * n_reps;
  std::vector<double> sse(jobs, 0.0);
  std::vector<int> redraws(jobs, 0);
  std::vector<std::string> failure(jobs);

  parallel_for(jobs, threads, [&](std::size_t job) {
    const int k = static_cast<int>(job) / n_reps + 1;
    Rng rng = Rng::stream(seed, job);
    constexpr int kMaxRedraw = 10;
    for (int attempt = 0;; ++attempt) {
      PanelView train;
      train.periods = all_periods;
      for (int i = 0; i < pattern.n_ctrl(); ++i)
        train.units.push_back(pattern.control_units[rng.uniform_int(pattern.n_ctrl())]);
      CellSet val;
      for (int i = 0; i < pattern.n_treat(); ++i) {
        const int idx = static_cast<int>(rng.uniform_int(pattern.n_treat()));
        const int unit = pattern.treated_units[idx];
        for (int s = 0; s < pattern.t_pre[idx]; ++s) val.cells.push_back({unit, s});
      }
      try {
        FitConfig cfg = config;
        cfg.k = k;
        auto [params, diag] = fit_als(panel, train, cfg);
        const Matrix gamma_val = fit_gamma_given_factors(panel, val, params, cfg);
        IpcaParams val_params;
        val_params.gamma = gamma_val;
        val_params.factors = params.factors;
        val_params.periods = params.periods;
        sse[job] = objective(val_params, panel, val);
        return;
      } catch (const std::exception& e) {
        if (attempt >= kMaxRedraw) {
          failure[job] = e.what();
          return;
        }
        ++redraws[job];
      }
    }
  });

  for (const auto& f : failure)
    if (!f.empty()) throw std::runtime_error("bootstrap replication failed after redraws: " + f);

  TuneResult res;
  res.method = TuneMethod::Bootstrap;
  res.n_reps = n_reps;
  res.seed = seed;
  res.mse_by_k.resize(k_max);
  for (int k = 1; k <= k_max; ++k) {
    double total = 0.0;
    for (int rep = 0; rep < n_reps; ++rep) total += sse[static_cast<std::size_t>(k - 1) * n_reps + rep];
    res.mse_by_k(k - 1) = total / n_reps;
  }
  for (int r : redraws) res.redraws += r;
  res.k_best = detail::argmin_with_ties(res.mse_by_k, detail::treat_pre_scale(panel, views.treat_pre));
  return res;
}

inline TuneResult tune_loo(const PanelData& panel, int k_max, const FitConfig& config, int threads = 1) {
  const TreatmentPattern pattern = classify_treatment(panel);
  detail::check_kmax(panel, pattern, k_max);
  const int t_pre_min = *std::min_element(pattern.t_pre.begin(), pattern.t_pre.end());
  const int t_pre_max = *std::max_element(pattern.t_pre.begin(), pattern.t_pre.end());
  if (t_pre_min < 2) throw std::invalid_argument("leave-one-out tuning needs at least two pre-treatment periods");
  const SplitViews views = split(panel, pattern);

  const int folds = t_pre_max;
  const std::size_t jobs = static_cast<std::size_t>(k_max) * folds;
  std::vector<double> sse(jobs, 0.0);
  std::vector<std::string> failure(jobs);

  parallel_for(jobs, threads, [&](std::size_t job) {
    const int k = static_cast<int>(job) / folds + 1;
    const int t_out = static_cast<int>(job) % folds;
    try {
      PanelView train;
      train.units = pattern.control_units;
      for (int s = 0; s < panel.n_periods(); ++s)
        if (s != t_out) train.periods.push_back(s);
      FitConfig cfg = config;
      cfg.k = k;
      auto [params, diag] = fit_als(panel, train, cfg);

      // held-out factor from the period-t control cross-section
      Matrix x_t(pattern.n_ctrl(), panel.n_covariates());
      Vector y_t(pattern.n_ctrl());
      for (int j = 0; j < pattern.n_ctrl(); ++j) {
        x_t.row(j) = panel.x[t_out].row(pattern.control_units[j]);
        y_t(j) = panel.y(pattern.control_units[j], t_out);
      }
      const Vector f_t = update_factors(params.gamma, x_t, y_t, cfg.rank_tol);

      CellSet refit, val;
      for (std::size_t j = 0; j < pattern.treated_units.size(); ++j) {
        const int unit = pattern.treated_units[j];
        for (int s = 0; s < pattern.t_pre[j]; ++s) {
          if (s == t_out)
            val.cells.push_back({unit, s});
          else
            refit.cells.push_back({unit, s});
        }
      }
      const Matrix gamma_val = fit_gamma_given_factors(panel, refit, params, cfg);
      double fold_sse = 0.0;
      for (const Cell& c : val.cells) {
        const double r = panel.y(c.unit, c.period) - structural_value(panel.x_row(c.unit, c.period), gamma_val, f_t);
        fold_sse += r * r;
      }
      sse[job] = fold_sse;
    } catch (const std::exception& e) {
      failure[job] = e.what();
    }
  });

  for (const auto& f : failure)
    if (!f.empty()) throw std::runtime_error("leave-one-out fold failed: " + f);

  TuneResult res;
  res.method = TuneMethod::LeaveOneOut;
  res.seed = 0;
  res.mse_by_k.resize(k_max);
  for (int k = 1; k <= k_max; ++k) {
    double total = 0.0;
    for (int f = 0; f < folds; ++f) total += sse[static_cast<std::size_t>(k - 1) * folds + f];
    res.mse_by_k(k - 1) = total / folds;
  }
  res.k_best = detail::argmin_with_ties(res.mse_by_k, detail::treat_pre_scale(panel, views.treat_pre));
  return res;
}

}  // namespace cscipca
