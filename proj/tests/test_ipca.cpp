#include <catch2/catch_amalgamated.hpp>

#include "cscipca/ipca.hpp"
#include "cscipca/simulation.hpp"
#include "helpers.hpp"

using namespace cscipca;
using testutil::randn;

namespace {

PanelView full_view(const PanelData& p) {
  PanelView v;
  for (int i = 0; i < p.n_units(); ++i) v.units.push_back(i);
  for (int s = 0; s < p.n_periods(); ++s) v.periods.push_back(s);
  return v;
}

IpcaParams make_params(Matrix gamma, Matrix factors) {
  IpcaParams p;
  p.gamma = std::move(gamma);
  p.factors = std::move(factors);
  p.periods.resize(p.factors.cols());
  for (std::size_t j = 0; j < p.periods.size(); ++j) p.periods[j] = static_cast<int>(j);
  return p;
}

}  // namespace

TEST_CASE("objective is zero under exact factor structure") {
  auto sp = testutil::make_structured_panel({.n_treat = 1, .n_ctrl = 3, .t_pre = 3, .t_post = 2, .l = 3, .k = 2});
  CHECK(objective(make_params(sp.gamma, sp.factors), sp.panel, full_view(sp.panel)) < 1e-20);
}

TEST_CASE("objective with zero gamma is the total outcome sum of squares") {
  auto sp = testutil::make_structured_panel({.n_treat = 1, .n_ctrl = 3, .t_pre = 3, .t_post = 2, .l = 3, .k = 2});
  const double got = objective(make_params(Matrix::Zero(3, 2), sp.factors), sp.panel, full_view(sp.panel));
  CHECK(got == Catch::Approx(sp.panel.y.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("objective matches a cell-by-cell summation oracle") {
  // random 3x4 panel, L=2, K=1
  Rng rng(17);
  const int n = 3, t = 4, l = 2, k = 1;
  Matrix y = randn(n, t, rng);
  std::vector<Matrix> x(t);
  for (int s = 0; s < t; ++s) x[s] = randn(n, l, rng);
  Matrix gamma = randn(l, k, rng);
  Matrix factors = randn(k, t, rng);

  double oracle = 0.0;
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) {
      double pred = 0.0;
      for (int kk = 0; kk < k; ++kk) {
        double loading = 0.0;
        for (int ll = 0; ll < l; ++ll) loading += x[s](i, ll) * gamma(ll, kk);
        pred += loading * factors(kk, s);
      }
      oracle += (y(i, s) - pred) * (y(i, s) - pred);
    }

  Eigen::MatrixXi d = Eigen::MatrixXi::Zero(n, t);
  d(0, t - 1) = 1;
  std::vector<std::string> units{"a", "b", "c"}, times{"1", "2", "3", "4"};
  const PanelData panel = PanelData::from_parts(units, times, y, x, d);
  CHECK(objective(make_params(gamma, factors), panel, full_view(panel)) == Catch::Approx(oracle).epsilon(1e-13));
}

TEST_CASE("init_factors_pca recovers a rank-1 direction") {
  Rng rng(5);
  Vector u = randn(6, 1, rng);
  Vector v = randn(8, 1, rng);
  const Matrix y = u * v.transpose();
  const Matrix f = init_factors_pca(y, 1);
  REQUIRE(f.rows() == 1);
  // proportional to v', leading (largest-magnitude) entry positive
  Eigen::Index at = 0;
  f.row(0).cwiseAbs().maxCoeff(&at);
  CHECK(f(0, at) > 0.0);
  const Vector dir = f.row(0).transpose().normalized();
  const Vector vn = v.normalized();
  CHECK(std::abs(std::abs(dir.dot(vn)) - 1.0) < 1e-12);
}

TEST_CASE("init_factors_pca rejects k beyond the numerical rank") {
  Rng rng(6);
  Vector u = randn(5, 1, rng);
  Vector v = randn(7, 1, rng);
  CHECK_THROWS_WITH(init_factors_pca(u * v.transpose(), 2), Catch::Matchers::ContainsSubstring("rank"));
}

TEST_CASE("init_factors_pca reconstruction error equals the discarded spectrum") {
  // 5x8 random outcome, k=2; oracle: full SVD computed directly
  Rng rng(23);
  const Matrix y = randn(5, 8, rng);
  const int k = 2;
  Eigen::JacobiSVD<Matrix> svd(y);
  double discarded = 0.0;
  for (int j = k; j < svd.singularValues().size(); ++j)
    discarded += svd.singularValues()(j) * svd.singularValues()(j);

  const Matrix f = init_factors_pca(y, k);  // k x 8
  // least-squares loadings onto the returned factor path
  const Matrix b = y * f.transpose() * (f * f.transpose()).inverse();
  const double recon_err = (y - b * f).squaredNorm();
  CHECK(recon_err == Catch::Approx(discarded).epsilon(1e-10));
}

TEST_CASE("update_factors on a constant regressor is the outcome mean") {
  // K=1 with X gamma = all-ones
  const int n = 7;
  Matrix x = Matrix::Ones(n, 1);
  Matrix gamma = Matrix::Ones(1, 1);
  Rng rng(9);
  Vector y = randn(n, 1, rng);
  const Vector f = update_factors(gamma, x, y);
  CHECK(f(0) == Catch::Approx(y.mean()).epsilon(1e-14));
}

TEST_CASE("update_factors recovers a noiseless coefficient") {
  Rng rng(10);
  const int n = 9, l = 3, k = 2;
  Matrix x = randn(n, l, rng);
  Matrix gamma = randn(l, k, rng);
  Vector c = randn(k, 1, rng);
  const Vector y = x * gamma * c;
  const Vector f = update_factors(gamma, x, y);
  CHECK((f - c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("update_factors matches an explicit normal-equations oracle") {
  // N=6, L=3, K=2 random instance
  Rng rng(11);
  Matrix x = randn(6, 3, rng);
  Matrix gamma = randn(3, 2, rng);
  Vector y = randn(6, 1, rng);
  const Matrix z = x * gamma;
  const Vector oracle = (z.transpose() * z).inverse() * z.transpose() * y;  // dense inverse, independent path
  const Vector f = update_factors(gamma, x, y);
  CHECK((f - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("update_factors flags an identically zero design") {
  Matrix x = Matrix::Ones(4, 2);
  Matrix gamma = Matrix::Zero(2, 1);
  Vector y = Vector::Ones(4);
  CHECK_THROWS_WITH(update_factors(gamma, x, y), Catch::Matchers::ContainsSubstring("degenerate"));
}

TEST_CASE("update_gamma scalar case matches the closed form") {
  // L=1, K=1: gamma = sum x f y / sum x^2 f^2
  Rng rng(12);
  const int n = 4, t = 3;
  detail::RectData d;
  d.y = randn(n, t, rng);
  for (int s = 0; s < t; ++s) {
    d.x.push_back(randn(n, 1, rng));
    d.periods.push_back(s);
  }
  Matrix f = randn(1, t, rng);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) {
      num += d.x[s](i, 0) * f(0, s) * d.y(i, s);
      den += d.x[s](i, 0) * d.x[s](i, 0) * f(0, s) * f(0, s);
    }
  const Matrix g = update_gamma(f, d);
  CHECK(g(0, 0) == Catch::Approx(num / den).epsilon(1e-13));
}

TEST_CASE("update_gamma recovers a noiseless mapping matrix") {
  Rng rng(13);
  const int n = 8, t = 6, l = 3, k = 2;
  Matrix gamma_true = randn(l, k, rng);
  Matrix f = randn(k, t, rng);
  detail::RectData d;
  d.y.resize(n, t);
  for (int s = 0; s < t; ++s) {
    d.x.push_back(randn(n, l, rng));
    d.periods.push_back(s);
    d.y.col(s) = d.x[s] * gamma_true * f.col(s);
  }
  const Matrix g = update_gamma(f, d);
  CHECK((g - gamma_true).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("update_gamma attains a local optimum against random perturbations") {
  // N=4, T=5, L=2, K=2: no perturbation of norm 0.1 does better
  Rng rng(14);
  const int n = 4, t = 5, l = 2, k = 2;
  detail::RectData d;
  d.y = randn(n, t, rng);
  for (int s = 0; s < t; ++s) {
    d.x.push_back(randn(n, l, rng));
    d.periods.push_back(s);
  }
  Matrix f = randn(k, t, rng);
  const Matrix g = update_gamma(f, d);
  const double best = objective(g, f, d);
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix delta = randn(l, k, rng);
    delta *= 0.1 / delta.norm();
    CHECK(objective(g + delta, f, d) >= best - 1e-12);
  }
}

TEST_CASE("update_gamma cell path agrees with the blocked path") {
  Rng rng(15);
  const int n = 5, t = 4, l = 3, k = 2;
  auto sp = testutil::make_structured_panel(
      {.n_treat = 1, .n_ctrl = n - 1, .t_pre = t - 1, .t_post = 1, .l = l, .k = k, .noise_sd = 0.5, .seed = 15});
  Matrix f = randn(k, t, rng);
  detail::RectData d = detail::gather(sp.panel, full_view(sp.panel));
  const Matrix blocked = update_gamma(f, d);
  CellSet all;
  std::vector<int> periods;
  for (int s = 0; s < t; ++s) periods.push_back(s);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) all.cells.push_back({i, s});
  const Matrix by_cell = update_gamma(f, periods, sp.panel, all);
  CHECK((blocked - by_cell).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("updates are deterministic") {
  Rng rng(16);
  detail::RectData d;
  d.y = randn(6, 5, rng);
  for (int s = 0; s < 5; ++s) {
    d.x.push_back(randn(6, 3, rng));
    d.periods.push_back(s);
  }
  Matrix f = randn(2, 5, rng);
  const Matrix g1 = update_gamma(f, d);
  const Matrix g2 = update_gamma(f, d);
  CHECK((g1.array() == g2.array()).all());
  const Vector f1 = update_factors(g1, d.x[0], d.y.col(0));
  const Vector f2 = update_factors(g1, d.x[0], d.y.col(0));
  CHECK((f1.array() == f2.array()).all());
}

TEST_CASE("fit_als recovers an exact factor structure") {
  auto sp = testutil::make_structured_panel({.n_treat = 2, .n_ctrl = 8, .t_pre = 6, .t_post = 4, .l = 4, .k = 2});
  FitConfig cfg;
  cfg.k = 2;
  auto [params, diag] = fit_als(sp.panel, full_view(sp.panel), cfg);
  const double ynorm2 = sp.panel.y.squaredNorm();
  CHECK(diag.objective_path.back() < 1e-8 * ynorm2);
  CHECK(diag.converged);
}

TEST_CASE("fit_als rejects k = 0") {
  auto sp = testutil::make_structured_panel({});
  FitConfig cfg;
  cfg.k = 0;
  CHECK_THROWS_WITH(fit_als(sp.panel, full_view(sp.panel), cfg), Catch::Matchers::ContainsSubstring("at least 1"));
}

TEST_CASE("fit_als objective path is non-increasing on a noisy simulated draw") {
  DgpConfig dgp;
  dgp.n_treat = 5;
  dgp.n_ctrl = 45;
  dgp.t_pre = 20;
  dgp.t_post = 10;
  dgp.l = 10;
  dgp.k = 3;
  dgp.seed = 99;
  const SimulatedPanel sim = simulate_panel(dgp);
  const TreatmentPattern pat = classify_treatment(sim.panel);
  const SplitViews views = split(sim.panel, pat);
  FitConfig cfg;
  cfg.k = 3;
  auto [params, diag] = fit_als(sim.panel, views.ctrl_all, cfg);
  REQUIRE(diag.objective_path.size() >= 2);
  for (std::size_t j = 1; j < diag.objective_path.size(); ++j)
    CHECK(diag.objective_path[j] <= diag.objective_path[j - 1] + 1e-12);
}

TEST_CASE("fit_als reproduces the structural component up to rotation") {
  auto sp = testutil::make_structured_panel({.n_treat = 2, .n_ctrl = 10, .t_pre = 8, .t_post = 4, .l = 5, .k = 3});
  FitConfig cfg;
  cfg.k = 3;
  auto [params, diag] = fit_als(sp.panel, full_view(sp.panel), cfg);
  // compare products cell by cell, never raw parameters
  double num = 0.0, den = 0.0;
  for (int i = 0; i < sp.panel.n_units(); ++i)
    for (int s = 0; s < sp.panel.n_periods(); ++s) {
      const double truth = (sp.panel.x[s].row(i) * sp.gamma).dot(sp.factors.col(s));
      const double fitted = (sp.panel.x[s].row(i) * params.gamma).dot(params.factors.col(s));
      num += (truth - fitted) * (truth - fitted);
      den += truth * truth;
    }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("fit_gamma_given_factors succeeds with enough treated cells") {
  // 5 treated x 20 pre-periods = 100 cells >= 10*3 parameters
  auto sp = testutil::make_structured_panel(
      {.n_treat = 5, .n_ctrl = 20, .t_pre = 20, .t_post = 5, .l = 10, .k = 3, .seed = 4});
  const TreatmentPattern pat = classify_treatment(sp.panel);
  const SplitViews views = split(sp.panel, pat);
  FitConfig cfg;
  cfg.k = 3;
  const IpcaParams truth = make_params(sp.gamma, sp.factors);
  const Matrix g = fit_gamma_given_factors(sp.panel, views.treat_pre, truth, cfg);
  // same mapping matrix generated the treated block, so it is recovered
  CHECK((g - sp.gamma).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fit_gamma_given_factors rejects an underdetermined refit") {
  auto sp = testutil::make_structured_panel(
      {.n_treat = 1, .n_ctrl = 20, .t_pre = 2, .t_post = 3, .l = 10, .k = 3, .seed = 8});
  const TreatmentPattern pat = classify_treatment(sp.panel);
  const SplitViews views = split(sp.panel, pat);
  FitConfig cfg;
  cfg.k = 3;
  const IpcaParams truth = make_params(sp.gamma, sp.factors);
  CHECK_THROWS_WITH(fit_gamma_given_factors(sp.panel, views.treat_pre, truth, cfg),
                    Catch::Matchers::ContainsSubstring("underdetermined"));
}

TEST_CASE("per-period factor update never worsens the period objective") {
  Rng rng(21);
  const int n = 6, l = 3, k = 2;
  Matrix x = randn(n, l, rng);
  Matrix gamma = randn(l, k, rng);
  Vector y = randn(n, 1, rng);
  const Vector f_new = update_factors(gamma, x, y);
  const double opt = (y - x * gamma * f_new).squaredNorm();
  for (int trial = 0; trial < 200; ++trial) {
    Vector f_other = randn(k, 1, rng);
    CHECK((y - x * gamma * f_other).squaredNorm() >= opt - 1e-12);
  }
}
