#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ascpipe/panel.hpp"

using namespace ascpipe;

namespace {

std::string cov_row(const std::string& id, int exposure, double elev = 100, double forest_pct = 50,
                    double forest_ha = 5000) {
  std::ostringstream s;
  s << id << ',' << exposure << ',' << elev << ",2.5,12,0.4,0.1," << forest_pct << ','
    << forest_ha;
  for (int m = 0; m < 12; ++m) s << ',' << 100 + 10 * m;
  return s.str();
}

std::string cov_header() {
  std::string h = "unit_id,exposure,elevation_m,slope_deg,pop_density,road_density,"
                  "protected_share,forest_pct_base,forest_ha_base";
  for (int m = 1; m <= 12; ++m) {
    char b[12];
    std::snprintf(b, sizeof(b), ",prec_m%02d", m);
    h += b;
  }
  return h + "\n";
}

PanelTables small_tables() {
  PanelTables t;
  std::ostringstream panel;
  panel << "unit_id,year,forest_ha\n";
  // Treated unit loses 1% per year; donors are flat or lose 0.5%.
  const std::vector<std::string> ids = {"T1", "D1", "D2", "D3"};
  const std::vector<double> rate = {0.01, 0.0, 0.005, 0.005};
  for (size_t u = 0; u < ids.size(); ++u) {
    double f = 10000.0;
    for (int y = 2010; y <= 2018; ++y) {
      panel << ids[u] << ',' << y << ',' << f << '\n';
      f *= (1.0 - rate[u]);
    }
  }
  t.panel_text = panel.str();
  t.covariate_text = cov_header() + cov_row("T1", 1) + "\n" + cov_row("D1", 0) + "\n" +
                     cov_row("D2", 0) + "\n" + cov_row("D3", 0) + "\n";
  return t;
}

}  // namespace

TEST_CASE("compute_outcome applies the percentage-loss transform") {
  // F: 1000 -> 990 is a 1% loss, so the outcome is +1 pp of deforestation.
  const auto y = compute_outcome({1000.0, 990.0, 990.0, 1039.5});
  REQUIRE(y.size() == 3);
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.0));
  CHECK(y[2] == doctest::Approx(-5.0).epsilon(1e-12));
  CHECK_THROWS_AS(compute_outcome({0.0, 5.0}), std::runtime_error);
}

TEST_CASE("panel load derives outcomes from forest area and keeps both consistent") {
  StudyConfig cfg;
  cfg.shock_year = 2015;
  const PanelDataset p = load_panel_tables(small_tables(), cfg);
  CHECK(p.n_units() == 4);
  // The first forest year is consumed by the difference transform.
  CHECK(p.year_start == 2011);
  CHECK(p.year_end == 2018);
  CHECK(p.outcome[p.unit_index("T1")][0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.outcome[p.unit_index("D1")][3] == doctest::Approx(0.0));
  REQUIRE(p.forest_area.has_value());
  p.validate();

  // Reconstruction round-trip: forest implied by outcomes matches stored forest.
  const auto& fa = *p.forest_area;
  const int i = p.unit_index("T1");
  double f = fa[i][0];
  for (int t = 0; t < p.n_years(); ++t) {
    f *= (1.0 - p.outcome[i][t] / 100.0);
    CHECK(f == doctest::Approx(fa[i][t + 1]).epsilon(1e-9));
  }
}

TEST_CASE("panel load rejects structural defects with named locations") {
  StudyConfig cfg;
  PanelTables t = small_tables();

  SUBCASE("year gap") {
    t.panel_text = "unit_id,year,forest_ha\nT1,2010,100\nT1,2012,90\n" + t.panel_text.substr(
        t.panel_text.find("D1"));
    // Rebuild: unit T1 has a gap 2010 -> 2012.
    CHECK_THROWS_WITH_AS(load_panel_tables(t, cfg), doctest::Contains("T1"),
                         std::runtime_error);
  }
  SUBCASE("duplicate unit-year") {
    t.panel_text += "D3,2018,5000\n";
    CHECK_THROWS_WITH_AS(load_panel_tables(t, cfg), doctest::Contains("D3"),
                         std::runtime_error);
  }
  SUBCASE("negative forest area") {
    t.panel_text += "D4,2010,-5\n";
    t.covariate_text += cov_row("D4", 0) + "\n";
    CHECK_THROWS_AS(load_panel_tables(t, cfg), std::runtime_error);
  }
  SUBCASE("unit missing covariates") {
    t.covariate_text = cov_header() + cov_row("T1", 1) + "\n" + cov_row("D1", 0) + "\n" +
                       cov_row("D2", 0) + "\n";
    CHECK_THROWS_WITH_AS(load_panel_tables(t, cfg), doctest::Contains("D3"),
                         std::runtime_error);
  }
  SUBCASE("no treated unit") {
    t.covariate_text = cov_header() + cov_row("T1", 0) + "\n" + cov_row("D1", 0) + "\n" +
                       cov_row("D2", 0) + "\n" + cov_row("D3", 0) + "\n";
    CHECK_THROWS_AS(load_panel_tables(t, cfg), std::runtime_error);
  }
}

TEST_CASE("config parsing applies defaults and validates") {
  const StudyConfig cfg = parse_config("shock_year=2014\nk=7\nci_levels=80,95\nseed=9\n");
  CHECK(cfg.shock_year == 2014);
  CHECK(cfg.match_count == 7);
  CHECK(cfg.ridge_lambda == 0.1);
  CHECK(cfg.lag_count == 3);
  CHECK(cfg.ci_levels == std::vector<int>{80, 95});
  CHECK(cfg.seed == 9);
  CHECK_THROWS_AS(parse_config("k=0\n").validate(), std::runtime_error);
  CHECK_THROWS_AS(parse_config("pool_weight=bogus\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_config("unknown_key=1\n"), std::runtime_error);
}

TEST_CASE("baseline_average and effect conversion to hectares") {
  const std::map<int, double> series = {{2010, 1.0}, {2011, 3.0}, {2012, 100.0}};
  CHECK(baseline_average(series, {2010, 2011}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(baseline_average(series, {2009}), std::runtime_error);

  // A -1.7pp rate effect on a 41233 ha forest is about 701 ha avoided.
  CHECK(avoided_hectares(-1.7, 41233.0) == doctest::Approx(700.961));
  CHECK(avoided_hectares(-0.7, 41233.0) == doctest::Approx(288.631));
  CHECK(avoided_hectares(0.0, 41233.0) == 0.0);
}

TEST_CASE("pooling weights treated outcomes by forest area") {
  StudyConfig cfg;
  PanelTables t = small_tables();
  // Make D1 treated too, with double the forest area of T1.
  t.covariate_text = cov_header() + cov_row("T1", 1, 100, 50, 5000) + "\n" +
                     cov_row("D1", 1, 100, 50, 10000) + "\n" + cov_row("D2", 0) + "\n" +
                     cov_row("D3", 0) + "\n";
  const PanelDataset p = load_panel_tables(t, cfg);
  const PooledUnit pooled = pool_treated(p, "forest_ha");
  REQUIRE(pooled.unit_weights.size() == 2);
  CHECK(pooled.unit_weights[0] == doctest::Approx(1.0 / 3.0));
  CHECK(pooled.unit_weights[1] == doctest::Approx(2.0 / 3.0));
  const int i_t1 = p.unit_index("T1");
  const int i_d1 = p.unit_index("D1");
  for (int s = 0; s < p.n_years(); ++s) {
    CHECK(pooled.outcome[s] ==
          doctest::Approx(p.outcome[i_t1][s] / 3.0 + 2.0 * p.outcome[i_d1][s] / 3.0));
  }
  // Covariates mirror the outcome weighting.
  CHECK(pooled.covariates.forest_ha_base == doctest::Approx(5000.0 / 3 + 2.0 * 10000 / 3));

  // land_area weighting: equal forest_pct means weights proportional to area.
  const PooledUnit by_area = pool_treated(p, "land_area");
  CHECK(by_area.unit_weights[1] == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(pool_treated(p, "population"), std::runtime_error);
}

TEST_CASE("land area is implied by baseline forest share") {
  CovariateRecord c;
  c.forest_pct_base = 40.0;
  c.forest_ha_base = 20000.0;  // 200 km^2 of forest at 40% cover -> 500 km^2
  CHECK(c.land_area_km2() == doctest::Approx(500.0));
  c.forest_pct_base = 0.0;
  CHECK_THROWS_AS(c.land_area_km2(), std::runtime_error);
}
