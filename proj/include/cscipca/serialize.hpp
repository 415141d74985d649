#pragma once

// JSON and CSV serialization for the public result types. Matrices are
// stored row-major with named dimensions. NaN (unobserved staggered
// cells) round-trips as null.

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "cscipca/baselines.hpp"
#include "cscipca/csc.hpp"
#include "cscipca/inference.hpp"
#include "cscipca/ipca.hpp"
#include "cscipca/simulation.hpp"
#include "cscipca/tuning.hpp"

namespace cscipca {

using Json = nlohmann::ordered_json;

inline Json matrix_json(const Matrix& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (std::isnan(m(i, j)))
        data.push_back(nullptr);
      else
        data.push_back(m(i, j));
    }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const Json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw std::runtime_error("matrix data length does not match dimensions");
  Matrix m(rows, cols);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index jj = 0; jj < cols; ++jj, ++idx)
      m(i, jj) = data[idx].is_null() ? std::numeric_limits<double>::quiet_NaN() : data[idx].get<double>();
  return m;
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isnan(v(i)))
      a.push_back(nullptr);
    else
      a.push_back(v(i));
  }
  return a;
}

inline Vector vector_from_json(const Json& j) {
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
  return v;
}

inline Json to_json(const IpcaParams& p) {
  return Json{{"gamma", matrix_json(p.gamma)}, {"factors", matrix_json(p.factors)}, {"periods", p.periods}};
}

inline IpcaParams ipca_params_from_json(const Json& j) {
  IpcaParams p;
  p.gamma = matrix_from_json(j.at("gamma"));
  p.factors = matrix_from_json(j.at("factors"));
  p.periods = j.at("periods").get<std::vector<int>>();
  return p;
}

inline Json to_json(const FitConfig& c) {
  return Json{{"k", c.k},       {"tol", c.tol},           {"max_iter", c.max_iter},
              {"seed", c.seed}, {"rank_tol", c.rank_tol}, {"n_restarts", c.n_restarts}};
}

inline FitConfig fit_config_from_json(const Json& j) {
  FitConfig c;
  c.k = j.value("k", c.k);
  c.tol = j.value("tol", c.tol);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.seed = j.value("seed", c.seed);
  c.rank_tol = j.value("rank_tol", c.rank_tol);
  c.n_restarts = j.value("n_restarts", c.n_restarts);
  return c;
}

inline Json to_json(const FitDiagnostics& d) {
  return Json{{"iterations", d.iterations},
              {"converged", d.converged},
              {"final_rel_change", d.final_rel_change},
              {"pinv_fallbacks", d.pinv_fallbacks},
              {"objective_path", d.objective_path}};
}

inline Json to_json(const CscFit& f) {
  return Json{{"method", "csc-ipca"},
              {"params_ctrl", to_json(f.params_ctrl)},
              {"gamma_treat_norm", matrix_json(f.gamma_treat_norm)},
              {"factors_norm", matrix_json(f.factors_norm)},
              {"y0_hat", matrix_json(f.y0_hat)},
              {"att", vector_json(f.att)},
              {"effects", matrix_json(f.effects)},
              {"post_columns", f.post_columns},
              {"pre_fit_rmse", f.pre_fit_rmse},
              {"pre_fit_warning", f.pre_fit_warning},
              {"diagnostics", to_json(f.diagnostics)},
              {"actual_mean", vector_json(f.actual_mean)},
              {"model_mean", vector_json(f.model_mean)}};
}

inline Json to_json(const IfeFit& f) {
  return Json{{"method", "csc-ife"},
              {"beta", vector_json(f.beta)},
              {"loadings", matrix_json(f.loadings)},
              {"factors", matrix_json(f.factors)},
              {"y0_hat", matrix_json(f.y0_hat)},
              {"att", vector_json(f.att)},
              {"effects", matrix_json(f.effects)},
              {"post_columns", f.post_columns},
              {"iterations", f.iterations},
              {"converged", f.converged},
              {"actual_mean", vector_json(f.actual_mean)},
              {"model_mean", vector_json(f.model_mean)}};
}

inline Json to_json(const ScmFit& f) {
  return Json{{"method", "scm"},
              {"weights", matrix_json(f.weights)},
              {"y0_hat", matrix_json(f.y0_hat)},
              {"att", vector_json(f.att)},
              {"effects", matrix_json(f.effects)},
              {"post_columns", f.post_columns},
              {"objective", vector_json(f.objective)},
              {"actual_mean", vector_json(f.actual_mean)},
              {"model_mean", vector_json(f.model_mean)}};
}

inline Json to_json(const TuneResult& r) {
  return Json{{"k_best", r.k_best},
              {"mse_by_k", vector_json(r.mse_by_k)},
              {"method", r.method == TuneMethod::Bootstrap ? "bootstrap" : "loo"},
              {"n_reps", r.n_reps},
              {"seed", r.seed},
              {"redraws", r.redraws}};
}

inline Json to_json(const ConformalResult& r) {
  Json j{{"p_value", r.p_value}, {"statistic", r.statistic}, {"level", r.level}};
  if (r.permutation_statistics.size() > 0) j["permutation_statistics"] = vector_json(r.permutation_statistics);
  if (r.ci_lower.size() > 0) {
    j["ci_lower"] = vector_json(r.ci_lower);
    j["ci_upper"] = vector_json(r.ci_upper);
    Json flags = Json::array();
    for (const auto f : r.ci_degenerate) flags.push_back(static_cast<bool>(f));
    j["ci_degenerate"] = std::move(flags);
  }
  return j;
}

inline Json to_json(const DgpConfig& c) {
  return Json{{"n_treat", c.n_treat},
              {"n_ctrl", c.n_ctrl},
              {"t_pre", c.t_pre},
              {"t_post", c.t_post},
              {"l", c.l},
              {"k", c.k},
              {"alpha_observed", c.alpha_observed},
              {"drift_treated", c.drift_treated},
              {"drift_ctrl", c.drift_ctrl},
              {"gamma_range", {c.gamma_range.first, c.gamma_range.second}},
              {"beta_range", {c.beta_range.first, c.beta_range.second}},
              {"fe_range", {c.fe_range.first, c.fe_range.second}},
              {"var_spectral_radius", c.var_spectral_radius},
              {"noise_sd", c.noise_sd},
              {"effect_path", c.effect_path},
              {"effect_noise_sd", c.effect_noise_sd},
              {"seed", c.seed}};
}

inline DgpConfig dgp_config_from_json(const Json& j) {
  DgpConfig c;
  auto range = [&](const char* name, std::pair<double, double> fallback) {
    if (!j.contains(name)) return fallback;
    const auto& a = j.at(name);
    if (!a.is_array() || a.size() != 2) throw std::runtime_error(std::string("config field ") + name + " must be [lo, hi]");
    return std::make_pair(a[0].get<double>(), a[1].get<double>());
  };
  try {
    c.n_treat = j.value("n_treat", c.n_treat);
    c.n_ctrl = j.value("n_ctrl", c.n_ctrl);
    c.t_pre = j.value("t_pre", c.t_pre);
    c.t_post = j.value("t_post", c.t_post);
    c.l = j.value("l", c.l);
    c.k = j.value("k", c.k);
    c.alpha_observed = j.value("alpha_observed", c.alpha_observed);
    c.drift_treated = j.value("drift_treated", c.drift_treated);
    c.drift_ctrl = j.value("drift_ctrl", c.drift_ctrl);
    c.gamma_range = range("gamma_range", c.gamma_range);
    c.beta_range = range("beta_range", c.beta_range);
    c.fe_range = range("fe_range", c.fe_range);
    c.var_spectral_radius = j.value("var_spectral_radius", c.var_spectral_radius);
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    c.effect_path = j.value("effect_path", c.effect_path);
    c.effect_noise_sd = j.value("effect_noise_sd", c.effect_noise_sd);
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("bad simulation config: ") + e.what());
  }
  // re-raise validation failures naming the field
  c.validate();
  return c;
}

inline Json to_json(const EstimatorStats& s) {
  return Json{{"name", s.name},
              {"bias", s.bias},
              {"rmse", s.rmse},
              {"std", s.std_dev},
              {"per_period_bias", vector_json(s.per_period_bias)},
              {"n_ok", s.n_ok},
              {"n_failed", s.n_failed}};
}

inline Json to_json(const McReport& r) {
  Json est = Json::array();
  for (const auto& s : r.estimators) est.push_back(to_json(s));
  return Json{{"config", to_json(r.config)}, {"n_reps", r.n_reps}, {"seed", r.seed}, {"estimators", std::move(est)}};
}

inline void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return Json::parse(in);
}

}  // namespace cscipca
