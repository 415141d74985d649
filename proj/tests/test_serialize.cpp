#include <catch2/catch_amalgamated.hpp>

#include <limits>

#include "cscipca/serialize.hpp"
#include "helpers.hpp"

using namespace cscipca;
using testutil::randn;

TEST_CASE("matrices round-trip through JSON with NaN as null") {
  Rng rng(301);
  Matrix m = randn(3, 4, rng);
  m(1, 2) = std::numeric_limits<double>::quiet_NaN();
  const Json j = matrix_json(m);
  CHECK(j.at("rows") == 3);
  CHECK(j.at("cols") == 4);
  CHECK(j.at("data")[1 * 4 + 2].is_null());
  const Matrix back = matrix_from_json(j);
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 4; ++c) {
      if (i == 1 && c == 2)
        CHECK(std::isnan(back(i, c)));
      else
        CHECK(back(i, c) == m(i, c));
    }
}

TEST_CASE("parameters round-trip through JSON") {
  Rng rng(302);
  IpcaParams p;
  p.gamma = randn(4, 2, rng);
  p.factors = randn(2, 6, rng);
  p.periods = {0, 1, 2, 3, 4, 5};
  const IpcaParams back = ipca_params_from_json(to_json(p));
  CHECK((back.gamma.array() == p.gamma.array()).all());
  CHECK((back.factors.array() == p.factors.array()).all());
  CHECK(back.periods == p.periods);
}

TEST_CASE("simulation config parsing validates fields by name") {
  CHECK_THROWS_WITH(dgp_config_from_json(Json{{"alpha_observed", 0.0}}),
                    Catch::Matchers::ContainsSubstring("alpha_observed"));
  CHECK_THROWS_WITH(dgp_config_from_json(Json{{"var_spectral_radius", 1.5}}),
                    Catch::Matchers::ContainsSubstring("var_spectral_radius"));
  CHECK_THROWS_WITH(dgp_config_from_json(Json{{"gamma_range", {1.0}}}),
                    Catch::Matchers::ContainsSubstring("gamma_range"));
  const DgpConfig c = dgp_config_from_json(Json{{"n_treat", 3}, {"noise_sd", 0.5}});
  CHECK(c.n_treat == 3);
  CHECK(c.noise_sd == 0.5);
  CHECK(c.n_ctrl == 45);  // untouched defaults survive
}

TEST_CASE("fit config round-trips") {
  FitConfig c;
  c.k = 4;
  c.tol = 1e-8;
  c.seed = 99;
  const FitConfig back = fit_config_from_json(to_json(c));
  CHECK(back.k == 4);
  CHECK(back.tol == 1e-8);
  CHECK(back.seed == 99);
}

TEST_CASE("estimation results serialize with their diagnostics") {
  auto sp = testutil::make_structured_panel({.noise_sd = 0.3, .seed = 303});
  FitConfig cfg;
  cfg.k = 2;
  const CscFit fit = estimate(sp.panel, cfg);
  const Json j = to_json(fit);
  CHECK(j.at("method") == "csc-ipca");
  CHECK(j.at("diagnostics").contains("objective_path"));
  CHECK(j.at("att").size() == static_cast<std::size_t>(fit.att.size()));
  const Vector att = vector_from_json(j.at("att"));
  CHECK((att.array() == fit.att.array()).all());
}
