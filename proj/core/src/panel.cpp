#include "ascpipe/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ascpipe/csv.hpp"

namespace ascpipe {

double CovariateRecord::land_area_km2() const {
  if (forest_pct_base <= 0.0) {
    throw std::runtime_error("land area undefined: forest_pct_base must be > 0");
  }
  // forest_ha_base is in hectares; 100 ha = 1 km^2.
  return (forest_ha_base / 100.0) / (forest_pct_base / 100.0);
}

int PanelDataset::year_index(int year) const {
  if (year < year_start || year > year_end) {
    throw std::runtime_error("year " + std::to_string(year) + " outside panel range [" +
                             std::to_string(year_start) + ", " + std::to_string(year_end) + "]");
  }
  return year - year_start;
}

int PanelDataset::unit_index(const std::string& id) const {
  auto it = std::find(units.begin(), units.end(), id);
  if (it == units.end()) throw std::runtime_error("unknown unit '" + id + "'");
  return static_cast<int>(it - units.begin());
}

std::vector<int> PanelDataset::treated_indices() const {
  std::vector<int> out;
  for (int i = 0; i < n_units(); ++i)
    if (exposure[i]) out.push_back(i);
  return out;
}

std::vector<int> PanelDataset::donor_indices() const {
  std::vector<int> out;
  for (int i = 0; i < n_units(); ++i)
    if (!exposure[i]) out.push_back(i);
  return out;
}

std::vector<int> PanelDataset::pre_years() const {
  std::vector<int> out;
  for (int y = year_start; y < shock_year; ++y) out.push_back(y);
  return out;
}

std::vector<int> PanelDataset::post_years() const {
  std::vector<int> out;
  for (int y = shock_year; y <= year_end; ++y) out.push_back(y);
  return out;
}

void PanelDataset::validate() const {
  const int n = n_units();
  const int t = n_years();
  if (n == 0) throw std::runtime_error("panel has no units");
  if (t < 1) throw std::runtime_error("panel year range is empty");
  if (static_cast<int>(outcome.size()) != n || static_cast<int>(covariates.size()) != n ||
      static_cast<int>(exposure.size()) != n) {
    throw std::runtime_error("panel field lengths disagree with unit count");
  }
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(outcome[i].size()) != t) {
      throw std::runtime_error("outcome row for unit '" + units[i] + "' has wrong length");
    }
    for (int j = 0; j < t; ++j) {
      if (!std::isfinite(outcome[i][j])) {
        throw std::runtime_error("non-finite outcome for unit '" + units[i] + "' year " +
                                 std::to_string(year_start + j));
      }
    }
  }
  if (forest_area) {
    for (int i = 0; i < n; ++i) {
      // The panel may carry one extra leading forest year (the rate base year).
      const auto& f = (*forest_area)[i];
      if (static_cast<int>(f.size()) != t && static_cast<int>(f.size()) != t + 1) {
        throw std::runtime_error("forest series for unit '" + units[i] + "' has wrong length");
      }
      for (double v : f) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw std::runtime_error("negative or non-finite forest area for unit '" + units[i] + "'");
        }
      }
      // Consistency of stored rates with the forest transform.
      const int off = static_cast<int>(f.size()) - t;  // 1 when base year retained
      for (int j = (off == 1 ? 0 : 1); j < t; ++j) {
        const double prev = f[j - 1 + off];
        const double cur = f[j + off];
        if (prev <= 0.0) continue;
        const double rate = -100.0 * (cur - prev) / prev;
        if (std::abs(rate - outcome[i][j]) > 1e-9 * std::max(1.0, std::abs(rate))) {
          throw std::runtime_error("outcome/forest mismatch for unit '" + units[i] + "' year " +
                                   std::to_string(year_start + j));
        }
      }
    }
  }
  int n1 = 0;
  for (int v : exposure) {
    if (v != 0 && v != 1) throw std::runtime_error("exposure flags must be 0/1");
    n1 += v;
  }
  if (n1 < 1) throw std::runtime_error("panel has no treated units");
  if (n1 == n) throw std::runtime_error("panel has no donor units");
  if (shock_year <= year_start || shock_year > year_end) {
    throw std::runtime_error("shock year must lie within (year_start, year_end]");
  }
  if (shock_year - year_start < 2) {
    throw std::runtime_error("at least 2 pre-shock periods are required");
  }
}

void StudyConfig::validate() const {
  if (match_count < 1) throw std::runtime_error("match_count must be >= 1");
  if (ridge_lambda < 0.0) throw std::runtime_error("ridge_lambda must be >= 0");
  if (balance_tolerance < 0.0) throw std::runtime_error("balance_tolerance must be >= 0");
  if (lag_count < 0) throw std::runtime_error("lag_count must be >= 0");
  if (ci_levels.empty()) throw std::runtime_error("ci_levels must be nonempty");
  for (int l : ci_levels) {
    if (l != 80 && l != 90 && l != 95) {
      throw std::runtime_error("ci_levels entries must be in {80, 90, 95}");
    }
  }
  if (pool_weight != "forest_ha" && pool_weight != "land_area") {
    throw std::runtime_error("pool_weight must be 'forest_ha' or 'land_area'");
  }
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

StudyConfig parse_config(const std::string& text) {
  StudyConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("config line without '=': " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "shock_year") {
      cfg.shock_year = csv::parse_int(val, "config shock_year");
    } else if (key == "k") {
      cfg.match_count = csv::parse_int(val, "config k");
    } else if (key == "balance_tol") {
      cfg.balance_tolerance = csv::parse_double(val, "config balance_tol");
    } else if (key == "ridge_lambda") {
      cfg.ridge_lambda = csv::parse_double(val, "config ridge_lambda");
    } else if (key == "lag_count") {
      cfg.lag_count = csv::parse_int(val, "config lag_count");
    } else if (key == "ci_levels") {
      cfg.ci_levels.clear();
      std::istringstream ls(val);
      std::string tok;
      while (std::getline(ls, tok, ',')) cfg.ci_levels.push_back(csv::parse_int(trim(tok), "config ci_levels"));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(std::stoull(val));
    } else if (key == "pool_weight") {
      cfg.pool_weight = val;
    } else {
      throw std::runtime_error("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

StudyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<double> compute_outcome(const std::vector<double>& forest_series) {
  if (forest_series.size() < 2) {
    throw std::runtime_error("compute_outcome needs at least 2 years of forest area");
  }
  std::vector<double> rates;
  rates.reserve(forest_series.size() - 1);
  for (size_t t = 1; t < forest_series.size(); ++t) {
    const double prev = forest_series[t - 1];
    if (prev == 0.0) {
      throw std::runtime_error("compute_outcome: zero forest area at series position " +
                               std::to_string(t - 1) + " (division by zero)");
    }
    rates.push_back(-100.0 * (forest_series[t] - prev) / prev);
  }
  return rates;
}

double baseline_average(const std::map<int, double>& series, const std::vector<int>& years) {
  if (years.empty()) throw std::runtime_error("baseline_average: empty year set");
  double sum = 0.0;
  for (int y : years) {
    auto it = series.find(y);
    if (it == series.end()) {
      throw std::runtime_error("baseline_average: year " + std::to_string(y) + " missing");
    }
    sum += it->second;
  }
  return sum / static_cast<double>(years.size());
}

PooledUnit pool_treated(const PanelDataset& panel, const std::string& weight_field) {
  const auto treated = panel.treated_indices();
  std::vector<double> w(treated.size());
  double total = 0.0;
  for (size_t k = 0; k < treated.size(); ++k) {
    const auto& cov = panel.covariates[treated[k]];
    if (weight_field == "forest_ha") {
      w[k] = cov.forest_ha_base;
    } else if (weight_field == "land_area") {
      w[k] = cov.land_area_km2();
    } else {
      throw std::runtime_error("unknown pool weight field '" + weight_field + "'");
    }
    if (w[k] < 0.0) throw std::runtime_error("negative pooling weight for unit '" +
                                             panel.units[treated[k]] + "'");
    total += w[k];
  }
  if (total <= 0.0) throw std::runtime_error("pool_treated: total pooling weight is zero");
  for (auto& v : w) v /= total;

  PooledUnit out;
  out.unit_weights = w;
  out.outcome.assign(panel.n_years(), 0.0);
  for (size_t k = 0; k < treated.size(); ++k) {
    for (int t = 0; t < panel.n_years(); ++t) {
      out.outcome[t] += w[k] * panel.outcome[treated[k]][t];
    }
  }
  // Pooled covariates mirror the outcome weighting.
  CovariateRecord& c = out.covariates;
  for (size_t k = 0; k < treated.size(); ++k) {
    const auto& ck = panel.covariates[treated[k]];
    c.elevation_m += w[k] * ck.elevation_m;
    c.slope_deg += w[k] * ck.slope_deg;
    c.pop_density += w[k] * ck.pop_density;
    c.road_density += w[k] * ck.road_density;
    c.protected_share += w[k] * ck.protected_share;
    c.forest_pct_base += w[k] * ck.forest_pct_base;
    c.forest_ha_base += w[k] * ck.forest_ha_base;
    for (int m = 0; m < 12; ++m) c.prec_monthly[m] += w[k] * ck.prec_monthly[m];
  }
  return out;
}

double avoided_hectares(double effect_pp, double forest_ha) {
  if (forest_ha < 0.0) throw std::runtime_error("avoided_hectares: forest_ha must be >= 0");
  return -effect_pp / 100.0 * forest_ha;
}

namespace {

PanelDataset build_panel(const csv::Table& panel_t, const csv::Table& cov_t,
                         const StudyConfig& config) {
  const int c_unit = panel_t.require_column("unit_id");
  const int c_year = panel_t.require_column("year");
  const int c_forest = panel_t.column("forest_ha");
  const int c_out = panel_t.column("outcome_pp");
  if (c_forest < 0 && c_out < 0) {
    throw std::runtime_error("panel file needs a forest_ha or outcome_pp column");
  }

  struct Cell {
    double forest = std::numeric_limits<double>::quiet_NaN();
    double out = std::numeric_limits<double>::quiet_NaN();
  };
  std::map<std::string, std::map<int, Cell>> by_unit;
  std::vector<std::string> unit_order;
  for (const auto& row : panel_t.rows) {
    const std::string& id = row[c_unit];
    const int year = csv::parse_int(row[c_year], "panel year for unit " + id);
    if (!by_unit.count(id)) unit_order.push_back(id);
    Cell cell;
    if (c_forest >= 0 && !row[c_forest].empty()) {
      cell.forest = csv::parse_double(row[c_forest], "forest_ha for unit " + id);
      if (cell.forest < 0.0) {
        throw std::runtime_error("negative forest area for unit '" + id + "' year " +
                                 std::to_string(year));
      }
    }
    if (c_out >= 0 && !row[c_out].empty()) {
      cell.out = csv::parse_double(row[c_out], "outcome_pp for unit " + id);
    }
    auto [it, inserted] = by_unit[id].emplace(year, cell);
    if (!inserted) {
      throw std::runtime_error("duplicate row for unit '" + id + "' year " + std::to_string(year));
    }
  }
  if (unit_order.empty()) throw std::runtime_error("panel file has no rows");

  // All units must share one contiguous year range.
  int y0 = by_unit.begin()->second.begin()->first;
  int y1 = by_unit.begin()->second.rbegin()->first;
  for (const auto& [id, cells] : by_unit) {
    y0 = std::min(y0, cells.begin()->first);
    y1 = std::max(y1, cells.rbegin()->first);
  }
  for (const auto& id : unit_order) {
    const auto& cells = by_unit[id];
    for (int y = y0; y <= y1; ++y) {
      if (!cells.count(y)) {
        throw std::runtime_error("unit '" + id + "' is missing year " + std::to_string(y));
      }
    }
  }

  const bool have_forest = c_forest >= 0;
  const bool have_outcome = c_out >= 0;
  // When rates are derived from forest levels the first year has no rate.
  const int out_y0 = (have_outcome ? y0 : y0 + 1);

  PanelDataset panel;
  panel.units = unit_order;
  panel.year_start = out_y0;
  panel.year_end = y1;
  panel.shock_year = config.shock_year;
  if (have_forest) panel.forest_area.emplace();

  for (const auto& id : unit_order) {
    const auto& cells = by_unit[id];
    std::vector<double> forest;
    std::vector<double> rates;
    if (have_forest) {
      for (int y = y0; y <= y1; ++y) {
        const double f = cells.at(y).forest;
        if (!std::isfinite(f)) {
          throw std::runtime_error("unit '" + id + "' year " + std::to_string(y) +
                                   ": empty forest_ha cell");
        }
        forest.push_back(f);
      }
    }
    if (have_outcome) {
      for (int y = y0; y <= y1; ++y) {
        const double v = cells.at(y).out;
        if (!std::isfinite(v)) {
          throw std::runtime_error("unit '" + id + "' year " + std::to_string(y) +
                                   ": empty outcome_pp cell");
        }
        rates.push_back(v);
      }
    } else {
      try {
        rates = compute_outcome(forest);
      } catch (const std::exception& e) {
        throw std::runtime_error("unit '" + id + "': " + e.what());
      }
    }
    panel.outcome.push_back(std::move(rates));
    if (have_forest) panel.forest_area->push_back(std::move(forest));
  }

  // Covariates + exposure.
  const int k_unit = cov_t.require_column("unit_id");
  const int k_exp = cov_t.require_column("exposure");
  const int k_elev = cov_t.require_column("elevation_m");
  const int k_slope = cov_t.require_column("slope_deg");
  const int k_pop = cov_t.require_column("pop_density");
  const int k_road = cov_t.require_column("road_density");
  const int k_prot = cov_t.require_column("protected_share");
  const int k_fp = cov_t.require_column("forest_pct_base");
  const int k_fh = cov_t.require_column("forest_ha_base");
  std::array<int, 12> k_prec{};
  for (int m = 0; m < 12; ++m) {
    char name[16];
    std::snprintf(name, sizeof(name), "prec_m%02d", m + 1);
    k_prec[m] = cov_t.require_column(name);
  }

  std::map<std::string, std::pair<CovariateRecord, int>> cov_by_unit;
  for (const auto& row : cov_t.rows) {
    const std::string& id = row[k_unit];
    CovariateRecord c;
    const std::string ctx = "covariates for unit " + id;
    c.elevation_m = csv::parse_double(row[k_elev], ctx);
    c.slope_deg = csv::parse_double(row[k_slope], ctx);
    c.pop_density = csv::parse_double(row[k_pop], ctx);
    c.road_density = csv::parse_double(row[k_road], ctx);
    c.protected_share = csv::parse_double(row[k_prot], ctx);
    c.forest_pct_base = csv::parse_double(row[k_fp], ctx);
    c.forest_ha_base = csv::parse_double(row[k_fh], ctx);
    for (int m = 0; m < 12; ++m) c.prec_monthly[m] = csv::parse_double(row[k_prec[m]], ctx);
    int exp = csv::parse_int(row[k_exp], ctx);
    if (!cov_by_unit.emplace(id, std::make_pair(c, exp)).second) {
      throw std::runtime_error("duplicate covariate row for unit '" + id + "'");
    }
  }

  for (const auto& id : unit_order) {
    auto it = cov_by_unit.find(id);
    if (it == cov_by_unit.end()) {
      throw std::runtime_error("unit '" + id + "' present in panel but not in covariates");
    }
    panel.covariates.push_back(it->second.first);
    panel.exposure.push_back(it->second.second);
  }
  if (cov_by_unit.size() != unit_order.size()) {
    for (const auto& [id, _] : cov_by_unit) {
      if (!by_unit.count(id)) {
        throw std::runtime_error("unit '" + id + "' present in covariates but not in panel");
      }
    }
  }

  panel.validate();
  return panel;
}

}  // namespace

PanelDataset load_panel(const std::string& panel_path, const std::string& covariate_path,
                        const StudyConfig& config) {
  return build_panel(csv::read_file(panel_path), csv::read_file(covariate_path), config);
}

PanelDataset load_panel_tables(const PanelTables& tables, const StudyConfig& config) {
  return build_panel(csv::read_string(tables.panel_text), csv::read_string(tables.covariate_text),
                     config);
}

}  // namespace ascpipe
