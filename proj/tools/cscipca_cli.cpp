// Command-line front end: simulate, estimate, tune, infer, mc, report.
//
// Every run echoes its resolved configuration into the JSON output and is
// deterministic for a fixed --seed, independent of --threads. Errors are
// emitted as one JSON object on stderr with a nonzero exit code.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cscipca/cscipca.hpp"

namespace {

using namespace cscipca;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CommonOpts {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: all cores
  std::string out;
  std::string format = "json";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--threads", o.threads, "worker thread cap (0 = all cores)");
  cmd->add_option("--out,-o", o.out, "output path")->required();
  cmd->add_option("--format", o.format, "output format")->check(CLI::IsMember({"json", "csv"}));
}

struct SchemaOpts {
  CsvSchema schema;
  std::string x_cols;
};

void add_schema(CLI::App* cmd, SchemaOpts& s) {
  cmd->add_option("--unit-col", s.schema.unit_col, "unit id column name");
  cmd->add_option("--time-col", s.schema.time_col, "period column name");
  cmd->add_option("--y-col", s.schema.y_col, "outcome column name");
  cmd->add_option("--d-col", s.schema.d_col, "treatment indicator column name");
  cmd->add_option("--x-prefix", s.schema.x_prefix, "covariate column prefix");
  cmd->add_option("--x-cols", s.x_cols, "explicit comma-separated covariate columns");
}

CsvSchema resolve_schema(const SchemaOpts& s) {
  CsvSchema schema = s.schema;
  if (!s.x_cols.empty()) {
    std::stringstream ss(s.x_cols);
    std::string col;
    while (std::getline(ss, col, ',')) schema.x_cols.push_back(col);
  }
  return schema;
}

DgpConfig load_dgp_config(const std::string& path) {
  if (path.empty()) return DgpConfig{};
  return dgp_config_from_json(read_json(path));
}

std::vector<double> parse_grid(const std::string& spec) {
  // lo:hi:n
  double lo = 0.0, hi = 0.0;
  int n = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 2 || !(hi > lo))
    throw std::runtime_error("bad grid spec '" + spec + "', expected lo:hi:n");
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i) grid[i] = lo + (hi - lo) * i / (n - 1);
  return grid;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CommonOpts& common, const std::string& config_path, const std::string& truth_path) {
  DgpConfig cfg = load_dgp_config(config_path);
  cfg.seed = common.seed ? common.seed : cfg.seed;
  const SimulatedPanel sim = simulate_panel(cfg);
  write_csv(sim.panel, common.out);
  Json truth{{"config", to_json(cfg)},
             {"true_att", vector_json(sim.true_att)},
             {"latent_dims",
              Json{{"l_total", cfg.l},
                   {"l_observed", sim.panel.n_covariates()},
                   {"k", cfg.k},
                   {"n_treat", cfg.n_treat},
                   {"n_ctrl", cfg.n_ctrl},
                   {"t_pre", cfg.t_pre},
                   {"t_post", cfg.t_post}}}};
  write_json(truth, truth_path.empty() ? common.out + ".truth.json" : truth_path);
  return 0;
}

std::string gap_csv(const Vector& actual, const Vector& model, const std::vector<std::string>& time_ids,
                    const Vector& att, const std::vector<int>& post_columns, const ConformalResult* bands) {
  std::ostringstream out;
  out << "period,actual_mean,counterfactual_mean,att";
  if (bands) out << ",ci_lo,ci_hi";
  out << '\n';
  std::vector<int> col_of_period(time_ids.size(), -1);
  for (std::size_t c = 0; c < post_columns.size(); ++c)
    if (post_columns[c] >= 0 && post_columns[c] < static_cast<int>(time_ids.size()))
      col_of_period[post_columns[c]] = static_cast<int>(c);
  for (std::size_t s = 0; s < time_ids.size(); ++s) {
    out << time_ids[s] << ',' << fmt(actual(s)) << ',' << fmt(model(s)) << ',';
    const int c = col_of_period[s];
    if (c >= 0) out << fmt(att(c));
    if (bands) {
      out << ',';
      if (c >= 0) out << fmt(bands->ci_lower(c));
      out << ',';
      if (c >= 0) out << fmt(bands->ci_upper(c));
    }
    out << '\n';
  }
  return out.str();
}

int cmd_estimate(const CommonOpts& common, const SchemaOpts& schema_opts, const std::string& data_path,
                 const std::string& method, int k, const std::string& tune_method, int tune_kmax, int tune_reps,
                 bool infer, double level, const std::string& grid_spec, double q, bool standardize, bool intercept,
                 const std::string& dump_params, const std::string& gap_path) {
  PanelData panel = load_csv(data_path, resolve_schema(schema_opts));
  if (standardize) panel = standardize_covariates(panel, classify_treatment(panel));
  if (intercept) panel = add_intercept(panel);

  FitConfig fit_cfg;
  fit_cfg.k = k;
  fit_cfg.seed = common.seed;

  Json out;
  std::optional<TuneResult> tuned;
  if (!tune_method.empty()) {
    const int kmax = tune_kmax > 0 ? tune_kmax : std::min(panel.n_covariates(), 8);
    if (tune_method == "bootstrap")
      tuned = tune_bootstrap(panel, kmax, tune_reps, fit_cfg, common.seed, common.threads);
    else
      tuned = tune_loo(panel, kmax, fit_cfg, common.threads);
    fit_cfg.k = tuned->k_best;
  }

  Vector att;
  Vector actual, model;
  std::vector<int> post_columns;
  std::vector<std::string> time_ids = panel.time_ids;
  if (method == "ipca") {
    const CscFit fit = estimate(panel, fit_cfg);
    out = to_json(fit);
    att = fit.att;
    actual = fit.actual_mean;
    model = fit.model_mean;
    post_columns = fit.post_columns;
    if (!dump_params.empty()) {
      IpcaParams reported;
      reported.gamma = fit.gamma_treat_norm;
      reported.factors = fit.factors_norm;
      reported.periods = fit.params_ctrl.periods;
      write_json(Json{{"config", to_json(fit_cfg)}, {"params", to_json(reported)}}, dump_params);
    }
  } else if (method == "ife") {
    const IfeFit fit = fit_ife(panel, fit_cfg.k);
    out = to_json(fit);
    att = fit.att;
    actual = fit.actual_mean;
    model = fit.model_mean;
    post_columns = fit.post_columns;
  } else if (method == "scm") {
    const ScmFit fit = fit_scm(panel);
    out = to_json(fit);
    att = fit.att;
    actual = fit.actual_mean;
    model = fit.model_mean;
    post_columns = fit.post_columns;
  } else {
    throw std::runtime_error("unknown method '" + method + "'");
  }

  std::optional<ConformalResult> bands;
  if (infer) {
    const ConformalEngine engine(panel, fit_cfg, q);
    const std::vector<double> grid = grid_spec.empty() ? default_conformal_grid(engine) : parse_grid(grid_spec);
    bands = confidence_interval(panel, grid, level, fit_cfg, q);
    out["inference"] = to_json(*bands);
  }
  if (tuned) out["tuning"] = to_json(*tuned);
  out["config"] = Json{{"method", method},
                       {"fit", to_json(fit_cfg)},
                       {"seed", common.seed},
                       {"standardize", standardize},
                       {"intercept", intercept},
                       {"data", data_path}};
  write_json(out, common.out);
  if (!gap_path.empty())
    write_text(gap_path, gap_csv(actual, model, time_ids, att, post_columns, bands ? &*bands : nullptr));
  return 0;
}

int cmd_tune(const CommonOpts& common, const SchemaOpts& schema_opts, const std::string& data_path,
             const std::string& method, int kmax, int reps, const std::string& mse_csv) {
  const PanelData panel = load_csv(data_path, resolve_schema(schema_opts));
  FitConfig cfg;
  cfg.seed = common.seed;
  const int k_max = kmax > 0 ? kmax : std::min(panel.n_covariates(), 8);
  const TuneResult res = method == "bootstrap" ? tune_bootstrap(panel, k_max, reps, cfg, common.seed, common.threads)
                                               : tune_loo(panel, k_max, cfg, common.threads);
  Json out = to_json(res);
  out["config"] = Json{{"method", method}, {"k_max", k_max}, {"reps", reps}, {"seed", common.seed}, {"data", data_path}};
  write_json(out, common.out);
  if (!mse_csv.empty()) {
    std::ostringstream csv;
    csv << "k,mse\n";
    for (Eigen::Index i = 0; i < res.mse_by_k.size(); ++i) csv << (i + 1) << ',' << fmt(res.mse_by_k(i)) << '\n';
    write_text(mse_csv, csv.str());
  }
  return 0;
}

int cmd_infer(const CommonOpts& common, const SchemaOpts& schema_opts, const std::string& data_path, int k,
              const std::string& null_spec, double level, const std::string& grid_spec, double q,
              const std::string& bands_csv) {
  const PanelData panel = load_csv(data_path, resolve_schema(schema_opts));
  FitConfig cfg;
  cfg.k = k;
  cfg.seed = common.seed;
  const ConformalEngine engine(panel, cfg, q);

  Json out;
  out["config"] = Json{{"k", k}, {"level", level}, {"q", q}, {"null", null_spec}, {"seed", common.seed},
                       {"data", data_path}};

  if (!null_spec.empty()) {
    // a constant effect, or a path to a JSON array
    Vector theta0;
    char* end = nullptr;
    const double constant = std::strtod(null_spec.c_str(), &end);
    if (end && *end == '\0') {
      theta0 = Vector::Constant(engine.t_post(), constant);
    } else {
      const Json arr = read_json(null_spec);
      if (!arr.is_array()) throw std::runtime_error("null path file must hold a JSON array");
      theta0 = vector_from_json(arr);
    }
    out["test"] = to_json(engine.pvalue(theta0));
  }

  const std::vector<double> grid = grid_spec.empty() ? default_conformal_grid(engine) : parse_grid(grid_spec);
  const ConformalResult bands = confidence_interval(panel, grid, level, cfg, q);
  out["interval"] = to_json(bands);
  write_json(out, common.out);

  if (!bands_csv.empty()) {
    std::ostringstream csv;
    csv << "post_period,ci_lo,ci_hi,degenerate\n";
    for (Eigen::Index s = 0; s < bands.ci_lower.size(); ++s)
      csv << (s + 1) << ',' << fmt(bands.ci_lower(s)) << ',' << fmt(bands.ci_upper(s)) << ','
          << static_cast<int>(bands.ci_degenerate[s]) << '\n';
    write_text(bands_csv, csv.str());
  }
  return 0;
}

std::vector<Estimator> parse_estimators(const std::string& spec) {
  std::vector<Estimator> out;
  std::stringstream ss(spec);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "ipca")
      out.push_back(Estimator::CscIpca);
    else if (name == "ife")
      out.push_back(Estimator::CscIfe);
    else if (name == "scm")
      out.push_back(Estimator::Scm);
    else
      throw std::runtime_error("unknown estimator '" + name + "'");
  }
  if (out.empty()) throw std::runtime_error("no estimators requested");
  return out;
}

std::string mc_table(const std::vector<std::pair<std::pair<int, int>, std::vector<McReport>>>& cells,
                     const std::vector<double>& alphas, const std::string& estimator) {
  // rows: (t_pre, n_ctrl); columns: alpha x {bias, rmse, std}
  std::ostringstream out;
  out << "estimator: " << estimator << "\n";
  out << "  T0 Nctrl";
  for (const char* metric : {"bias", "rmse", "std"})
    for (double a : alphas) {
      char head[32];
      std::snprintf(head, sizeof(head), " %6s@%-4.2f", metric, a);
      out << head;
    }
  out << '\n';
  for (const auto& [key, reports] : cells) {
    char row[32];
    std::snprintf(row, sizeof(row), "%4d %5d", key.first, key.second);
    out << row;
    auto value = [&](const McReport& r, int which) {
      for (const auto& st : r.estimators)
        if (st.name == estimator) return which == 0 ? st.bias : which == 1 ? st.rmse : st.std_dev;
      return std::numeric_limits<double>::quiet_NaN();
    };
    for (int which = 0; which < 3; ++which)
      for (const McReport& r : reports) {
        char cell[32];
        std::snprintf(cell, sizeof(cell), " %11.3f", value(r, which));
        out << cell;
      }
    out << '\n';
  }
  return out.str();
}

int cmd_mc(const CommonOpts& common, const std::string& config_path, int reps, const std::string& estimators_spec,
           const std::string& table_path) {
  Json mc_cfg = config_path.empty() ? Json::object() : read_json(config_path);
  const DgpConfig base = mc_cfg.contains("dgp") ? dgp_config_from_json(mc_cfg.at("dgp")) : DgpConfig{};
  const std::vector<int> t_pre_list = mc_cfg.value("t_pre_list", std::vector<int>{base.t_pre});
  const std::vector<int> n_ctrl_list = mc_cfg.value("n_ctrl_list", std::vector<int>{base.n_ctrl});
  const std::vector<double> alpha_list = mc_cfg.value("alpha_list", std::vector<double>{base.alpha_observed});
  const std::vector<Estimator> estimators = parse_estimators(estimators_spec);

  std::vector<std::pair<std::pair<int, int>, std::vector<McReport>>> cells;
  Json cell_reports = Json::array();
  for (const int t_pre : t_pre_list)
    for (const int n_ctrl : n_ctrl_list) {
      std::vector<McReport> row;
      for (const double alpha : alpha_list) {
        DgpConfig cfg = base;
        cfg.t_pre = t_pre;
        cfg.n_ctrl = n_ctrl;
        cfg.alpha_observed = alpha;
        const McReport rep = monte_carlo(cfg, estimators, reps, common.seed, common.threads);
        cell_reports.push_back(to_json(rep));
        row.push_back(rep);
      }
      cells.emplace_back(std::make_pair(t_pre, n_ctrl), std::move(row));
    }

  Json out{{"config", Json{{"dgp", to_json(base)},
                           {"t_pre_list", t_pre_list},
                           {"n_ctrl_list", n_ctrl_list},
                           {"alpha_list", alpha_list},
                           {"reps", reps},
                           {"estimators", estimators_spec},
                           {"seed", common.seed}}},
           {"cells", std::move(cell_reports)}};
  write_json(out, common.out);

  std::ostringstream table;
  for (const Estimator e : estimators) table << mc_table(cells, alpha_list, estimator_name(e)) << '\n';
  if (!table_path.empty())
    write_text(table_path, table.str());
  else
    std::cout << table.str();
  return 0;
}

int cmd_report(const std::string& fit_path, const std::string& out_path) {
  const Json fit = read_json(fit_path);
  const Vector att = vector_from_json(fit.at("att"));
  const Matrix effects = matrix_from_json(fit.at("effects"));
  const Vector actual = vector_from_json(fit.at("actual_mean"));
  const Vector model = vector_from_json(fit.at("model_mean"));
  const std::vector<int> post_columns = fit.at("post_columns").get<std::vector<int>>();

  std::ostringstream csv;
  csv << "period,actual_mean,fitted_mean,att";
  for (Eigen::Index u = 0; u < effects.rows(); ++u) csv << ",effect_unit" << (u + 1);
  csv << '\n';
  // pre-period rows: actual vs fitted pairs; post rows add effects
  std::vector<int> col_of_period(actual.size(), -1);
  for (std::size_t c = 0; c < post_columns.size(); ++c)
    if (post_columns[c] >= 0 && post_columns[c] < actual.size()) col_of_period[post_columns[c]] = static_cast<int>(c);
  for (Eigen::Index s = 0; s < actual.size(); ++s) {
    csv << (s + 1) << ',' << fmt(actual(s)) << ',' << fmt(model(s)) << ',';
    const int c = col_of_period[s];
    if (c >= 0) csv << fmt(att(c));
    for (Eigen::Index u = 0; u < effects.rows(); ++u) {
      csv << ',';
      if (c >= 0 && !std::isnan(effects(u, c))) csv << fmt(effects(u, c));
    }
    csv << '\n';
  }
  write_text(out_path, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"counterfactual estimation for panel data with instrumented factor loadings"};
  app.require_subcommand(1);

  CommonOpts common;

  // simulate
  auto* sim = app.add_subcommand("simulate", "draw a synthetic panel and write CSV plus a truth sidecar");
  std::string sim_config, sim_truth;
  sim->add_option("--config", sim_config, "simulation config JSON");
  sim->add_option("--truth", sim_truth, "truth sidecar path (default: <out>.truth.json)");
  add_common(sim, common);

  // estimate
  auto* est = app.add_subcommand("estimate", "fit an estimator and write the result JSON (and gap CSV)");
  std::string est_data, est_method = "ipca", est_tune, est_grid, est_dump, est_gap;
  int est_k = 1, est_tune_kmax = 0, est_tune_reps = 100;
  bool est_infer = false, est_standardize = false, est_intercept = false;
  double est_level = 0.95, est_q = 1.0;
  SchemaOpts est_schema;
  est->add_option("--data", est_data, "input panel CSV")->required();
  est->add_option("--method", est_method, "estimator")->check(CLI::IsMember({"ipca", "ife", "scm"}));
  est->add_option("--k", est_k, "number of latent factors");
  est->add_option("--tune", est_tune, "pick k first")->check(CLI::IsMember({"bootstrap", "loo"}));
  est->add_option("--tune-kmax", est_tune_kmax, "largest k to try (default min(L, 8))");
  est->add_option("--tune-reps", est_tune_reps, "bootstrap replications");
  est->add_flag("--infer", est_infer, "attach conformal confidence bands");
  est->add_option("--level", est_level, "band coverage level");
  est->add_option("--grid", est_grid, "inversion grid lo:hi:n");
  est->add_option("--q", est_q, "statistic exponent");
  est->add_flag("--standardize", est_standardize, "z-score covariates on control moments");
  est->add_flag("--intercept", est_intercept, "append a constant covariate");
  est->add_option("--dump-params", est_dump, "write normalized parameters JSON");
  est->add_option("--gap", est_gap, "write gap-plot CSV");
  add_schema(est, est_schema);
  add_common(est, common);

  // tune
  auto* tune = app.add_subcommand("tune", "select the number of latent factors");
  std::string tune_data, tune_method = "bootstrap", tune_mse_csv;
  int tune_kmax = 0, tune_reps = 100;
  SchemaOpts tune_schema;
  tune->add_option("--data", tune_data, "input panel CSV")->required();
  tune->add_option("--method", tune_method, "tuning method")->check(CLI::IsMember({"bootstrap", "loo"}));
  tune->add_option("--kmax", tune_kmax, "largest k to try (default min(L, 8))");
  tune->add_option("--reps", tune_reps, "bootstrap replications");
  tune->add_option("--mse-csv", tune_mse_csv, "write MSE-vs-k CSV");
  add_schema(tune, tune_schema);
  add_common(tune, common);

  // infer
  auto* inf = app.add_subcommand("infer", "sharp-null test and confidence bands");
  std::string inf_data, inf_null, inf_grid, inf_bands;
  int inf_k = 1;
  double inf_level = 0.95, inf_q = 1.0;
  SchemaOpts inf_schema;
  inf->add_option("--data", inf_data, "input panel CSV")->required();
  inf->add_option("--k", inf_k, "number of latent factors");
  inf->add_option("--null", inf_null, "constant effect or path to a JSON array");
  inf->add_option("--level", inf_level, "band coverage level");
  inf->add_option("--grid", inf_grid, "inversion grid lo:hi:n");
  inf->add_option("--q", inf_q, "statistic exponent");
  inf->add_option("--bands-csv", inf_bands, "write band CSV");
  add_schema(inf, inf_schema);
  add_common(inf, common);

  // mc
  auto* mc = app.add_subcommand("mc", "replicated bias study over a config grid");
  std::string mc_config, mc_estimators = "ipca", mc_table_path;
  int mc_reps = 100;
  mc->add_option("--config", mc_config, "study config JSON (dgp plus t_pre_list/n_ctrl_list/alpha_list)");
  mc->add_option("--reps", mc_reps, "replications per cell");
  mc->add_option("--estimators", mc_estimators, "comma list: ipca,ife,scm");
  mc->add_option("--table", mc_table_path, "write the text table here instead of stdout");
  add_common(mc, common);

  // report
  auto* rep = app.add_subcommand("report", "render a fit JSON as a plot-ready CSV");
  std::string rep_fit, rep_out;
  rep->add_option("--fit", rep_fit, "fit JSON from estimate")->required();
  rep->add_option("--out,-o", rep_out, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(common, sim_config, sim_truth);
    if (est->parsed())
      return cmd_estimate(common, est_schema, est_data, est_method, est_k, est_tune, est_tune_kmax, est_tune_reps,
                          est_infer, est_level, est_grid, est_q, est_standardize, est_intercept, est_dump, est_gap);
    if (tune->parsed()) return cmd_tune(common, tune_schema, tune_data, tune_method, tune_kmax, tune_reps, tune_mse_csv);
    if (inf->parsed())
      return cmd_infer(common, inf_schema, inf_data, inf_k, inf_null, inf_level, inf_grid, inf_q, inf_bands);
    if (mc->parsed()) return cmd_mc(common, mc_config, mc_reps, mc_estimators, mc_table_path);
    if (rep->parsed()) return cmd_report(rep_fit, rep_out);
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
