#pragma once

// Panel simulator and Monte Carlo harness. Outcomes follow
//
//   Y_it = D_it * delta_it + X_it beta' + (X_it Gamma) F_t' + alpha_i + xi_t + eps_it
//
// with per-unit VAR(1) covariates (drifted for treated units, so
// assignment is selection on observables), a VAR(1) factor path, uniform
// fixed effects, and a ramp treatment-effect path with unit-level noise.
// Only a fraction of the covariates is exposed to the estimators.

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cscipca/baselines.hpp"
#include "cscipca/csc.hpp"
#include "cscipca/panel.hpp"
#include "cscipca/rng.hpp"

namespace cscipca {

struct DgpConfig {
  int n_treat = 5;
  int n_ctrl = 45;
  int t_pre = 20;
  int t_post = 10;
  int l = 10;
  int k = 3;
  double alpha_observed = 1.0;  // fraction of covariates exposed
  double drift_treated = 2.0;
  double drift_ctrl = 0.0;
  std::pair<double, double> gamma_range{-0.1, 0.1};
  std::pair<double, double> beta_range{0.0, 1.0};
  std::pair<double, double> fe_range{0.0, 1.0};
  double var_spectral_radius = 0.6;
  double noise_sd = 1.0;
  std::vector<double> effect_path;  // empty: ramp 1..t_post
  double effect_noise_sd = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_treat < 1 || n_ctrl < 1) throw std::invalid_argument("n_treat and n_ctrl must be positive");
    if (t_pre < 1 || t_post < 1) throw std::invalid_argument("t_pre and t_post must be positive");
    if (!(alpha_observed > 0.0) || alpha_observed > 1.0)
      throw std::invalid_argument("alpha_observed must lie in (0, 1]");
    if (!(var_spectral_radius >= 0.0) || var_spectral_radius >= 1.0)
      throw std::invalid_argument("var_spectral_radius must lie in [0, 1)");
    if (k < 1 || k > l) throw std::invalid_argument("k must satisfy 1 <= k <= l");
    if (!(noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be nonnegative");
    if (!(effect_noise_sd >= 0.0)) throw std::invalid_argument("effect_noise_sd must be nonnegative");
    if (!effect_path.empty() && static_cast<int>(effect_path.size()) != t_post)
      throw std::invalid_argument("effect_path length must equal t_post");
  }

  int n_observed() const { return static_cast<int>(std::ceil(alpha_observed * l - 1e-12)); }
  int n_units() const { return n_treat + n_ctrl; }
  int n_periods() const { return t_pre + t_post; }
};

struct SimulatedPanel {
  PanelData panel;     // observed covariates only
  Vector true_att;     // t_post: realized mean treatment effect per post period
  // latent ground truth for debugging and oracles
  std::vector<Matrix> x_full;  // T slices, N x L (all covariates)
  Matrix factors;              // K x T
  Matrix gamma;                // L x K
  Vector beta;                 // L
  Vector alpha_fe;             // N
  Vector xi_fe;                // T
  Matrix delta;                // N_treat x t_post realized effects
};

/// Draw n_series independent VAR(1) paths x_t = drift + A x_{t-1} + nu_t,
/// nu ~ N(0, I). Each series gets its own transition matrix with i.i.d.
/// normal entries rescaled to the target spectral radius; 50 burn-in
/// periods are discarded. Returns one T x dim matrix per series;
/// transitions_out, when given, receives the rescaled A matrices.
inline std::vector<Matrix> draw_var1(int n_series, int dim, double drift, double radius, int t, Rng& rng,
                                     std::vector<Matrix>* transitions_out = nullptr) {
  if (!(radius >= 0.0) || radius >= 1.0) throw std::invalid_argument("spectral radius must lie in [0, 1)");
  constexpr int kBurnIn = 50;
  std::vector<Matrix> out;
  out.reserve(n_series);
  for (int s = 0; s < n_series; ++s) {
    Matrix a(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) a(i, j) = rng.normal();
    Eigen::EigenSolver<Matrix> eig(a);
    const double rho = eig.eigenvalues().cwiseAbs().maxCoeff();
    a *= rho > 0.0 ? radius / rho : 0.0;
    if (transitions_out) transitions_out->push_back(a);
    Matrix series(t, dim);
    Vector x = Vector::Zero(dim);
    for (int step = 0; step < kBurnIn + t; ++step) {
      Vector nu(dim);
      for (int j = 0; j < dim; ++j) nu(j) = rng.normal();
      x = Vector::Constant(dim, drift) + a * x + nu;
      if (step >= kBurnIn) series.row(step - kBurnIn) = x.transpose();
    }
    out.push_back(std::move(series));
  }
  return out;
}

inline SimulatedPanel simulate_panel(const DgpConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int n = config.n_units();
  const int t = config.n_periods();
  const int l = config.l;
  const int k = config.k;

  // treated units first, then controls
  const auto x_treat = draw_var1(config.n_treat, l, config.drift_treated, config.var_spectral_radius, t, rng);
  const auto x_ctrl = draw_var1(config.n_ctrl, l, config.drift_ctrl, config.var_spectral_radius, t, rng);
  const Matrix factors = draw_var1(1, k, 0.0, config.var_spectral_radius, t, rng).front().transpose();  // K x T

  Matrix gamma(l, k);
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < k; ++j) gamma(i, j) = rng.uniform(config.gamma_range.first, config.gamma_range.second);
  Vector beta(l);
  for (int i = 0; i < l; ++i) beta(i) = rng.uniform(config.beta_range.first, config.beta_range.second);
  Vector alpha_fe(n), xi_fe(t);
  for (int i = 0; i < n; ++i) alpha_fe(i) = rng.uniform(config.fe_range.first, config.fe_range.second);
  for (int s = 0; s < t; ++s) xi_fe(s) = rng.uniform(config.fe_range.first, config.fe_range.second);

  Matrix delta(config.n_treat, config.t_post);
  for (int i = 0; i < config.n_treat; ++i)
    for (int s = 0; s < config.t_post; ++s) {
      const double base = config.effect_path.empty() ? static_cast<double>(s + 1) : config.effect_path[s];
      delta(i, s) = base + config.effect_noise_sd * rng.normal();
    }

  std::vector<Matrix> x_full(t, Matrix(n, l));
  for (int s = 0; s < t; ++s) {
    for (int i = 0; i < config.n_treat; ++i) x_full[s].row(i) = x_treat[i].row(s);
    for (int i = 0; i < config.n_ctrl; ++i) x_full[s].row(config.n_treat + i) = x_ctrl[i].row(s);
  }

  Matrix y(n, t);
  Eigen::MatrixXi d = Eigen::MatrixXi::Zero(n, t);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) {
      double v = x_full[s].row(i).dot(beta) + structural_value(x_full[s].row(i), gamma, factors.col(s)) +
                 alpha_fe(i) + xi_fe(s) + config.noise_sd * rng.normal();
      if (i < config.n_treat && s >= config.t_pre) {
        v += delta(i, s - config.t_pre);
        d(i, s) = 1;
      }
      y(i, s) = v;
    }

  const int l_obs = config.n_observed();
  std::vector<Matrix> x_obs(t);
  for (int s = 0; s < t; ++s) x_obs[s] = x_full[s].leftCols(l_obs);

  auto pad = [](int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
  };
  std::vector<std::string> unit_ids, time_ids;
  const int uw = static_cast<int>(std::to_string(n).size());
  const int tw = static_cast<int>(std::to_string(t).size());
  for (int i = 0; i < config.n_treat; ++i) unit_ids.push_back("T" + pad(i + 1, uw));
  for (int i = 0; i < config.n_ctrl; ++i) unit_ids.push_back("C" + pad(i + 1, uw));
  for (int s = 0; s < t; ++s) time_ids.push_back(pad(s + 1, tw));

  SimulatedPanel sim;
  sim.panel = PanelData::from_parts(std::move(unit_ids), std::move(time_ids), std::move(y), std::move(x_obs),
                                    std::move(d));
  sim.true_att = delta.colwise().mean();
  sim.x_full = std::move(x_full);
  sim.factors = factors;
  sim.gamma = gamma;
  sim.beta = beta;
  sim.alpha_fe = alpha_fe;
  sim.xi_fe = xi_fe;
  sim.delta = delta;
  return sim;
}

// ---------------------------------------------------------------------------
// Monte Carlo study
// ---------------------------------------------------------------------------

enum class Estimator { CscIpca, CscIfe, Scm };

inline std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::CscIpca: return "csc-ipca";
    case Estimator::CscIfe: return "csc-ife";
    case Estimator::Scm: return "scm";
  }
  return "?";
}

struct EstimatorStats {
  std::string name;
  double bias = 0.0;
  double rmse = 0.0;  // sqrt of pooled mean squared error over (rep, period)
  double std_dev = 0.0;
  Vector per_period_bias;  // t_post
  int n_ok = 0;
  int n_failed = 0;
};

struct McReport {
  DgpConfig config;
  int n_reps = 0;
  std::uint64_t seed = 0;
  std::vector<EstimatorStats> estimators;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t idx) {
  return splitmix64(splitmix64(seed) ^ splitmix64(idx + 0x51ed2701ULL));
}

/// Replicated bias study. Each replication simulates a panel, runs every
/// requested estimator on the observed covariates, and records per-period
/// ATT errors. bias is the pooled mean error, rmse the root of the pooled
/// mean squared error, std_dev the pooled error dispersion (so
/// rmse^2 = bias^2 + std_dev^2). Replications use independent seed
/// streams and run in parallel; aggregation order is fixed, so the report
/// does not depend on the thread count.
inline McReport monte_carlo(const DgpConfig& config, const std::vector<Estimator>& estimators, int n_reps,
                            std::uint64_t seed, int threads = 1, std::optional<int> k_fit = std::nullopt) {
  config.validate();
  if (n_reps < 1) throw std::invalid_argument("n_reps must be positive");
  const int t_post = config.t_post;
  const int n_est = static_cast<int>(estimators.size());

  // err[rep][est] is empty on estimator failure
  std::vector<std::vector<Vector>> err(static_cast<std::size_t>(n_reps), std::vector<Vector>(n_est));

  parallel_for(static_cast<std::size_t>(n_reps), threads, [&](std::size_t rep) {
    DgpConfig cfg = config;
    cfg.seed = derive_seed(seed, rep);
    const SimulatedPanel sim = simulate_panel(cfg);
    const int k = k_fit.value_or(std::min(config.k, sim.panel.n_covariates()));
    for (int e = 0; e < n_est; ++e) {
      try {
        Vector att;
        switch (estimators[e]) {
          case Estimator::CscIpca: {
            FitConfig fc;
            fc.k = k;
            att = estimate(sim.panel, fc).att;
            break;
          }
          case Estimator::CscIfe: {
            att = fit_ife(sim.panel, k, IfeConfig{}).att;
            break;
          }
          case Estimator::Scm: {
            att = fit_scm(sim.panel).att;
            break;
          }
        }
        err[rep][e] = att - sim.true_att;
      } catch (const std::exception&) {
        // failed replication: recorded and excluded from the aggregate
      }
    }
  });

  McReport report;
  report.config = config;
  report.n_reps = n_reps;
  report.seed = seed;
  for (int e = 0; e < n_est; ++e) {
    EstimatorStats st;
    st.name = estimator_name(estimators[e]);
    st.per_period_bias = Vector::Zero(t_post);
    double sum = 0.0, sum_sq = 0.0;
    long count = 0;
    for (int rep = 0; rep < n_reps; ++rep) {
      if (err[rep][e].size() == 0) {
        ++st.n_failed;
        continue;
      }
      ++st.n_ok;
      for (int s = 0; s < t_post; ++s) {
        const double v = err[rep][e](s);
        sum += v;
        sum_sq += v * v;
        st.per_period_bias(s) += v;
        ++count;
      }
    }
    if (count > 0) {
      st.bias = sum / count;
      st.rmse = std::sqrt(sum_sq / count);
      st.std_dev = std::sqrt(std::max(0.0, sum_sq / count - st.bias * st.bias));
      st.per_period_bias /= static_cast<double>(st.n_ok);
    }
    report.estimators.push_back(std::move(st));
  }
  return report;
}

}  // namespace cscipca
