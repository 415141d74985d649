#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "cscipca/cscipca.hpp"
#include "helpers.hpp"

// Golden-fixture verification: each fixture stores an expected value
// computed by an independent oracle (see generate_fixtures.cpp); here the
// library recomputes the quantity and must agree within the recorded
// tolerance. A stale fixture fails loudly.

using namespace cscipca;
using testutil::randn;

namespace {

const std::string kDir = CSCIPCA_FIXTURE_DIR;

Json load_fixture(const std::string& name) { return read_json(kDir + "/" + name + ".json"); }

}  // namespace

TEST_CASE("manifest lists every committed fixture") {
  const Json manifest = read_json(kDir + "/manifest.json");
  REQUIRE(manifest.contains("fixtures"));
  CHECK(manifest.at("fixtures").size() >= 9);
  for (const auto& entry : manifest.at("fixtures")) {
    const Json fx = read_json(kDir + "/" + entry.at("file").get<std::string>());
    CHECK(fx.at("name") == entry.at("name"));
    CHECK(fx.contains("oracle"));
    CHECK(fx.contains("expected"));
  }
}

TEST_CASE("fixture: objective_cell_sum") {
  const Json fx = load_fixture("objective_cell_sum");
  const auto& in = fx.at("input");
  Rng rng(in.at("seed").get<std::uint64_t>());
  const int n = in.at("n"), t = in.at("t"), l = in.at("l"), k = in.at("k");
  Matrix y = randn(n, t, rng);
  std::vector<Matrix> x(t);
  for (int s = 0; s < t; ++s) x[s] = randn(n, l, rng);
  IpcaParams p;
  p.gamma = randn(l, k, rng);
  p.factors = randn(k, t, rng);
  for (int s = 0; s < t; ++s) p.periods.push_back(s);
  Eigen::MatrixXi d = Eigen::MatrixXi::Zero(n, t);
  d(0, t - 1) = 1;
  std::vector<std::string> units, times;
  for (int i = 0; i < n; ++i) units.push_back("u" + std::to_string(i));
  for (int s = 0; s < t; ++s) times.push_back(std::to_string(s));
  const PanelData panel = PanelData::from_parts(units, times, y, x, d);
  PanelView view;
  for (int i = 0; i < n; ++i) view.units.push_back(i);
  for (int s = 0; s < t; ++s) view.periods.push_back(s);
  const double got = objective(p, panel, view);
  CHECK(got == Catch::Approx(fx.at("expected").at("objective").get<double>())
                   .epsilon(fx.at("tolerance").get<double>()));
}

TEST_CASE("fixture: pca_reconstruction") {
  const Json fx = load_fixture("pca_reconstruction");
  Rng rng(fx.at("input").at("seed").get<std::uint64_t>());
  const Matrix y = randn(fx.at("input").at("rows"), fx.at("input").at("cols"), rng);
  const int k = fx.at("input").at("k");
  const Matrix f = init_factors_pca(y, k);
  const Matrix b = y * f.transpose() * (f * f.transpose()).inverse();
  const double err = (y - b * f).squaredNorm();
  CHECK(err == Catch::Approx(fx.at("expected").at("reconstruction_error").get<double>())
                   .epsilon(fx.at("tolerance").get<double>()));
}

TEST_CASE("fixture: update_factors_ls") {
  const Json fx = load_fixture("update_factors_ls");
  Rng rng(fx.at("input").at("seed").get<std::uint64_t>());
  Matrix x = randn(fx.at("input").at("n"), fx.at("input").at("l"), rng);
  Matrix gamma = randn(fx.at("input").at("l"), fx.at("input").at("k"), rng);
  Vector y = randn(fx.at("input").at("n"), 1, rng);
  const Vector expected = vector_from_json(fx.at("expected").at("f"));
  const Vector got = update_factors(gamma, x, y);
  CHECK((got - expected).cwiseAbs().maxCoeff() < fx.at("tolerance").get<double>());
}

TEST_CASE("fixture: statistic_q2") {
  const Json fx = load_fixture("statistic_q2");
  const Vector u = vector_from_json(fx.at("input").at("residuals"));
  CHECK(test_statistic(u, fx.at("input").at("q").get<double>()) ==
        Catch::Approx(fx.at("expected").at("statistic").get<double>()).epsilon(1e-13));
}

TEST_CASE("fixture: var1_stationary_mean") {
  const Json fx = load_fixture("var1_stationary_mean");
  const auto& in = fx.at("input");
  Rng rng(in.at("seed").get<std::uint64_t>());
  const auto series = draw_var1(1, in.at("dim"), in.at("drift"), in.at("radius"), in.at("t"), rng);
  const Vector sample = series.front().colwise().mean();
  const Vector expected = vector_from_json(fx.at("expected").at("mean"));
  CHECK((sample - expected).cwiseAbs().maxCoeff() < fx.at("tolerance").get<double>());
}

TEST_CASE("fixture: rotation_constraints") {
  const Json fx = load_fixture("rotation_constraints");
  const auto& in = fx.at("input");
  Rng rng(in.at("seed").get<std::uint64_t>());
  IpcaParams p;
  p.gamma = randn(in.at("l"), in.at("k"), rng);
  p.factors = randn(in.at("k"), in.at("t"), rng);
  for (int s = 0; s < in.at("t").get<int>(); ++s) p.periods.push_back(s);
  const IpcaParams n = normalize(p);
  const int k = in.at("k");
  const double t = in.at("t").get<double>();
  double residual = (n.gamma.transpose() * n.gamma - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
  const Matrix ff = n.factors * n.factors.transpose() / t;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (i != j) residual = std::max(residual, std::abs(ff(i, j)) / ff.diagonal().maxCoeff());
  CHECK(residual <= fx.at("tolerance").get<double>());
}

TEST_CASE("fixture: perm_pvalue_hand") {
  const Json fx = load_fixture("perm_pvalue_hand");
  ConformalResult res;
  detail::pvalue_from_path(vector_from_json(fx.at("input").at("residual_path")), fx.at("input").at("t_post"), 1.0,
                           res);
  CHECK(res.p_value == fx.at("expected").at("p_value").get<double>());
}

TEST_CASE("fixture: att_staggered_alignment") {
  const Json fx = load_fixture("att_staggered_alignment");
  const int t = fx.at("input").at("t");
  const std::vector<int> first = fx.at("input").at("first_treated").get<std::vector<int>>();
  const int n = 4;
  Matrix y = Matrix::Zero(n, t);
  Eigen::MatrixXi d = Eigen::MatrixXi::Zero(n, t);
  for (int s = first[0] - 1; s < t; ++s) {
    d(0, s) = 1;
    y(0, s) = 10.0 * (s - first[0] + 2);
  }
  for (int s = first[1] - 1; s < t; ++s) {
    d(1, s) = 1;
    y(1, s) = 100.0 * (s - first[1] + 2);
  }
  const PanelData p = testutil::panel_from_matrices(y, d, 1);
  const TreatmentPattern pat = classify_treatment(p);
  const SplitViews v = split(p, pat);
  const AttSeries s = att_series(p, pat, v.treat_post, Vector::Zero(v.treat_post.cells.size()));
  const Vector expected = vector_from_json(fx.at("expected").at("att"));
  REQUIRE(s.att.size() == expected.size());
  CHECK((s.att - expected).cwiseAbs().maxCoeff() < fx.at("tolerance").get<double>());
}

TEST_CASE("heavy fixtures are wired to the acceptance suite") {
  const Json manifest = read_json(kDir + "/manifest.json");
  bool found = false;
  for (const auto& entry : manifest.at("fixtures"))
    if (entry.at("name") == "table1_desk_scale") {
      CHECK(entry.at("verifier") == "acceptance");
      const Json fx = read_json(kDir + "/" + entry.at("file").get<std::string>());
      CHECK(fx.at("expected").contains("bias"));
      CHECK(fx.at("expected").contains("rmse"));
      found = true;
    }
  CHECK(found);
}
