#pragma once

// Balanced-panel data model: outcomes Y (N x T), covariates X (N x T x L,
// stored as one N x L matrix per period), and an absorbing binary
// treatment indicator D. Panels are immutable after construction and can
// be shared freely across threads.

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cscipca/linalg.hpp"

namespace cscipca {

struct PanelData {
  std::vector<std::string> unit_ids;  // N
  std::vector<std::string> time_ids;  // T, in panel order
  Matrix y;                           // N x T
  std::vector<Matrix> x;              // T matrices, each N x L
  Eigen::MatrixXi d;                  // N x T, entries 0/1

  int n_units() const { return static_cast<int>(unit_ids.size()); }
  int n_periods() const { return static_cast<int>(time_ids.size()); }
  int n_covariates() const { return x.empty() ? 0 : static_cast<int>(x.front().cols()); }

  Eigen::RowVectorXd x_row(int unit, int period) const { return x[period].row(unit); }

  /// Validating constructor from raw parts. Checks shapes, binary D,
  /// absorbing treatment, and a nonempty control group.
  static PanelData from_parts(std::vector<std::string> unit_ids, std::vector<std::string> time_ids,
                              Matrix y, std::vector<Matrix> x, Eigen::MatrixXi d) {
    const int n = static_cast<int>(unit_ids.size());
    const int t = static_cast<int>(time_ids.size());
    if (y.rows() != n || y.cols() != t) throw std::invalid_argument("outcome matrix shape does not match ids");
    if (d.rows() != n || d.cols() != t) throw std::invalid_argument("treatment matrix shape does not match ids");
    if (static_cast<int>(x.size()) != t) throw std::invalid_argument("covariate slices do not match period count");
    const int l = x.empty() ? 0 : static_cast<int>(x.front().cols());
    for (const auto& xt : x)
      if (xt.rows() != n || xt.cols() != l) throw std::invalid_argument("covariate slice shape mismatch");
    bool any_control = false;
    for (int i = 0; i < n; ++i) {
      bool on = false;
      bool treated = false;
      for (int s = 0; s < t; ++s) {
        const int v = d(i, s);
        if (v != 0 && v != 1) throw std::invalid_argument("treatment indicator must be 0 or 1");
        if (v == 1) {
          on = true;
          treated = true;
        } else if (on) {
          throw std::invalid_argument("treatment reverses for unit " + unit_ids[i] + " (non-absorbing)");
        }
      }
      if (!treated) any_control = true;
    }
    if (!any_control) throw std::invalid_argument("panel has no control unit");
    PanelData p;
    p.unit_ids = std::move(unit_ids);
    p.time_ids = std::move(time_ids);
    p.y = std::move(y);
    p.x = std::move(x);
    p.d = std::move(d);
    return p;
  }
};

struct TreatmentPattern {
  enum class Kind { Block, Staggered };
  Kind kind = Kind::Block;
  std::vector<int> treated_units;   // panel unit indices
  std::vector<int> control_units;   // complement
  std::vector<int> t_pre;           // per treated unit: count of pre-treatment periods

  int n_treat() const { return static_cast<int>(treated_units.size()); }
  int n_ctrl() const { return static_cast<int>(control_units.size()); }
  /// Uniform pre-period count; only meaningful under Block.
  int block_t_pre() const { return t_pre.front(); }
};

struct Cell {
  int unit;
  int period;
};

/// Ragged set of (unit, period) cells addressing a sub-panel.
struct CellSet {
  std::vector<Cell> cells;
};

/// Rectangular sub-panel: the cross product units x periods. Unit indices
/// may repeat (bootstrap resamples).
struct PanelView {
  std::vector<int> units;
  std::vector<int> periods;
};

struct SplitViews {
  PanelView ctrl_all;   // all control units, all periods
  CellSet treat_pre;    // treated units, own pre-treatment periods
  CellSet treat_post;   // treated units, own post-treatment periods
};

inline TreatmentPattern classify_treatment(const PanelData& panel) {
  TreatmentPattern pat;
  const int n = panel.n_units();
  const int t = panel.n_periods();
  std::vector<int> first_treated;
  for (int i = 0; i < n; ++i) {
    int first = -1;
    bool on = false;
    for (int s = 0; s < t; ++s) {
      if (panel.d(i, s) == 1) {
        if (!on) first = s;
        on = true;
      } else if (on) {
        throw std::invalid_argument("treatment reverses for unit " + panel.unit_ids[i]);
      }
    }
    if (first >= 0) {
      pat.treated_units.push_back(i);
      first_treated.push_back(first);
    } else {
      pat.control_units.push_back(i);
    }
  }
  if (pat.treated_units.empty()) throw std::invalid_argument("no treated unit in panel");
  pat.t_pre = first_treated;
  const bool uniform = std::all_of(first_treated.begin(), first_treated.end(),
                                   [&](int f) { return f == first_treated.front(); });
  pat.kind = uniform ? TreatmentPattern::Kind::Block : TreatmentPattern::Kind::Staggered;
  return pat;
}

/// Partition the panel into the three sub-panels the estimation steps
/// consume: full-period controls, treated pre-period, treated post-period.
inline SplitViews split(const PanelData& panel, const TreatmentPattern& pattern) {
  if (pattern.control_units.empty()) throw std::invalid_argument("control set is empty");
  SplitViews v;
  v.ctrl_all.units = pattern.control_units;
  v.ctrl_all.periods.resize(panel.n_periods());
  for (int s = 0; s < panel.n_periods(); ++s) v.ctrl_all.periods[s] = s;
  for (std::size_t j = 0; j < pattern.treated_units.size(); ++j) {
    const int i = pattern.treated_units[j];
    const int pre = pattern.t_pre[j];
    if (pre == 0)
      throw std::invalid_argument("unit " + panel.unit_ids[i] + " is treated from the first period (no pre-period)");
    for (int s = 0; s < pre; ++s) v.treat_pre.cells.push_back({i, s});
    for (int s = pre; s < panel.n_periods(); ++s) v.treat_post.cells.push_back({i, s});
  }
  return v;
}

// ---------------------------------------------------------------------------
// CSV ingestion (long format: unit,time,y,d,x1..xL)
// ---------------------------------------------------------------------------

struct CsvSchema {
  std::string unit_col = "unit";
  std::string time_col = "time";
  std::string y_col = "y";
  std::string d_col = "d";
  std::string x_prefix = "x";          // used when x_cols is empty
  std::vector<std::string> x_cols;     // explicit covariate columns
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, const std::string& col, std::size_t row) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\r' || *(end - 1) == '\t')) --end;
  double value = 0.0;
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end)
    throw std::runtime_error("row " + std::to_string(row) + ": non-numeric value '" + s + "' in column " + col);
  return value;
}

/// Order labels numerically when every label parses as a number,
/// lexicographically otherwise.
inline std::vector<std::string> sorted_labels(const std::vector<std::string>& labels) {
  std::vector<std::string> out(labels);
  bool all_numeric = true;
  std::vector<double> values(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& s = labels[i];
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      all_numeric = false;
      break;
    }
    values[i] = v;
  }
  if (all_numeric) {
    std::vector<std::size_t> idx(labels.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return values[a] != values[b] ? values[a] < values[b] : labels[a] < labels[b];
    });
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  } else {
    std::sort(out.begin(), out.end());
  }
  return out;
}

}  // namespace detail

/// Load a long-format CSV into a balanced panel. Rows are sorted by
/// (unit, time); L is inferred from the header. Missing or duplicate
/// (unit, time) pairs, non-binary d, and non-numeric fields are reported
/// with their location.
inline PanelData load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);

  auto col_index = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_unit = col_index(schema.unit_col);
  const int c_time = col_index(schema.time_col);
  const int c_y = col_index(schema.y_col);
  const int c_d = col_index(schema.d_col);
  if (c_unit < 0 || c_time < 0 || c_y < 0 || c_d < 0)
    throw std::runtime_error(path + ": header is missing one of " + schema.unit_col + "," + schema.time_col + "," +
                             schema.y_col + "," + schema.d_col);
  std::vector<int> c_x;
  std::vector<std::string> x_names = schema.x_cols;
  if (x_names.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      const std::string& h = header[i];
      if (h.size() > schema.x_prefix.size() && h.compare(0, schema.x_prefix.size(), schema.x_prefix) == 0 &&
          std::all_of(h.begin() + static_cast<long>(schema.x_prefix.size()), h.end(),
                      [](char c) { return c >= '0' && c <= '9'; }))
        x_names.push_back(h);
    }
    x_names = detail::sorted_labels(x_names);
  }
  for (const auto& name : x_names) {
    const int c = col_index(name);
    if (c < 0) throw std::runtime_error(path + ": missing covariate column " + name);
    c_x.push_back(c);
  }
  const int l = static_cast<int>(c_x.size());

  struct Row {
    double y;
    int d;
    std::vector<double> x;
  };
  std::map<std::pair<std::string, std::string>, Row> rows;
  std::vector<std::string> units_seen, times_seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("row " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    Row r;
    r.y = detail::parse_number(fields[c_y], schema.y_col, lineno);
    const double dv = detail::parse_number(fields[c_d], schema.d_col, lineno);
    if (dv != 0.0 && dv != 1.0)
      throw std::runtime_error("row " + std::to_string(lineno) + ": non-binary treatment value '" + fields[c_d] + "'");
    r.d = static_cast<int>(dv);
    r.x.resize(l);
    for (int j = 0; j < l; ++j) r.x[j] = detail::parse_number(fields[c_x[j]], x_names[j], lineno);
    const std::string unit = fields[c_unit];
    const std::string time = fields[c_time];
    if (!rows.emplace(std::make_pair(unit, time), std::move(r)).second)
      throw std::runtime_error("row " + std::to_string(lineno) + ": duplicate cell (" + unit + "," + time + ")");
    if (std::find(units_seen.begin(), units_seen.end(), unit) == units_seen.end()) units_seen.push_back(unit);
    if (std::find(times_seen.begin(), times_seen.end(), time) == times_seen.end()) times_seen.push_back(time);
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  const auto units = detail::sorted_labels(units_seen);
  const auto times = detail::sorted_labels(times_seen);
  const int n = static_cast<int>(units.size());
  const int t = static_cast<int>(times.size());
  Matrix y(n, t);
  Eigen::MatrixXi d(n, t);
  std::vector<Matrix> x(t, Matrix(n, l));
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < t; ++s) {
      const auto it = rows.find({units[i], times[s]});
      if (it == rows.end())
        throw std::runtime_error("unbalanced panel: missing cell (" + units[i] + "," + times[s] + ")");
      y(i, s) = it->second.y;
      d(i, s) = it->second.d;
      for (int j = 0; j < l; ++j) x[s](i, j) = it->second.x[j];
    }
  }
  return PanelData::from_parts(units, times, std::move(y), std::move(x), std::move(d));
}

/// Write a panel back to long-format CSV, rows sorted by (unit, time).
inline void write_csv(const PanelData& panel, const std::string& path, const CsvSchema& schema = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int l = panel.n_covariates();
  out << schema.unit_col << ',' << schema.time_col << ',' << schema.y_col << ',' << schema.d_col;
  for (int j = 0; j < l; ++j) out << ',' << schema.x_prefix << (j + 1);
  out << '\n';
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (int i = 0; i < panel.n_units(); ++i)
    for (int s = 0; s < panel.n_periods(); ++s) {
      out << panel.unit_ids[i] << ',' << panel.time_ids[s] << ',' << fmt(panel.y(i, s)) << ',' << panel.d(i, s);
      for (int j = 0; j < l; ++j) out << ',' << fmt(panel.x[s](i, j));
      out << '\n';
    }
}

/// Per-covariate z-scoring with moments taken from the control sample
/// only; the identical transform is applied to treated units. Covariates
/// with zero control variance are left unscaled (centered only).
inline PanelData standardize_covariates(const PanelData& panel, const TreatmentPattern& pattern) {
  const int l = panel.n_covariates();
  const int t = panel.n_periods();
  Vector mean = Vector::Zero(l), m2 = Vector::Zero(l);
  const double cells = static_cast<double>(pattern.control_units.size()) * t;
  for (int s = 0; s < t; ++s)
    for (int i : pattern.control_units) mean += panel.x[s].row(i).transpose();
  mean /= cells;
  for (int s = 0; s < t; ++s)
    for (int i : pattern.control_units) {
      const Vector c = panel.x[s].row(i).transpose() - mean;
      m2 += c.cwiseProduct(c);
    }
  Vector sd = (m2 / cells).cwiseSqrt();
  for (int j = 0; j < l; ++j)
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  std::vector<Matrix> x(panel.x);
  for (int s = 0; s < t; ++s)
    x[s] = (x[s].rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  return PanelData::from_parts(panel.unit_ids, panel.time_ids, panel.y, std::move(x), panel.d);
}

/// Append a constant covariate column (value 1) as covariate L+1.
inline PanelData add_intercept(const PanelData& panel) {
  const int l = panel.n_covariates();
  std::vector<Matrix> x(panel.x.size());
  for (std::size_t s = 0; s < panel.x.size(); ++s) {
    x[s].resize(panel.n_units(), l + 1);
    x[s].leftCols(l) = panel.x[s];
    x[s].col(l).setOnes();
  }
  return PanelData::from_parts(panel.unit_ids, panel.time_ids, panel.y, std::move(x), panel.d);
}

}  // namespace cscipca
