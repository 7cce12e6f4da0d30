#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ascpipe {

// Time-invariant unit covariates (baseline period averages).
struct CovariateRecord {
  double elevation_m = 0.0;
  double slope_deg = 0.0;
  double pop_density = 0.0;       // people / km^2
  double road_density = 0.0;      // km / km^2
  double protected_share = 0.0;   // [0, 1]
  double forest_pct_base = 0.0;   // [0, 100]
  double forest_ha_base = 0.0;
  std::array<double, 12> prec_monthly{};  // mm, Jan..Dec

  // Land area implied by the baseline forest share; forest_pct_base must be > 0.
  double land_area_km2() const;
};

// Rectangular unit x year panel with exposure flags. Immutable after load.
struct PanelDataset {
  std::vector<std::string> units;
  int year_start = 0;  // inclusive
  int year_end = 0;    // inclusive, contiguous range
  std::vector<std::vector<double>> outcome;  // unit x year, deforestation rate in pp
  std::optional<std::vector<std::vector<double>>> forest_area;  // hectares
  std::vector<CovariateRecord> covariates;
  std::vector<int> exposure;  // 0 donor, 1 treated
  int shock_year = 0;

  int n_units() const { return static_cast<int>(units.size()); }
  int n_years() const { return year_end - year_start + 1; }
  int year_index(int year) const;
  int unit_index(const std::string& id) const;
  std::vector<int> treated_indices() const;
  std::vector<int> donor_indices() const;
  std::vector<int> pre_years() const;   // [year_start, shock_year)
  std::vector<int> post_years() const;  // [shock_year, year_end]

  void validate() const;  // throws on invariant violation
};

struct StudyConfig {
  int shock_year = 2015;
  int match_count = 5;
  double balance_tolerance = 0.25;
  double ridge_lambda = 0.1;
  int lag_count = 3;
  std::vector<int> ci_levels = {80, 90, 95};
  std::uint64_t seed = 0;
  std::string pool_weight = "forest_ha";  // or "land_area"

  void validate() const;
};

StudyConfig parse_config(const std::string& text);
StudyConfig load_config(const std::string& path);

// Y_t = -100 (F_t - F_{t-1}) / F_{t-1}; output has length input-1.
std::vector<double> compute_outcome(const std::vector<double>& forest_series);

// Arithmetic mean of the values at the requested years.
double baseline_average(const std::map<int, double>& series, const std::vector<int>& years);

// Weight-normalized average of treated outcomes per year, plus the weights used.
struct PooledUnit {
  std::vector<double> outcome;        // per panel year
  CovariateRecord covariates;         // weight-averaged, mirrors the outcome weighting
  std::vector<double> unit_weights;   // normalized, over treated_indices() order
};
PooledUnit pool_treated(const PanelDataset& panel, const std::string& weight_field);

// Converts a pp effect on the deforestation rate into avoided hectares.
double avoided_hectares(double effect_pp, double forest_ha);

PanelDataset load_panel(const std::string& panel_path, const std::string& covariate_path,
                        const StudyConfig& config);
PanelDataset load_panel_tables(const struct PanelTables& tables, const StudyConfig& config);

// Parsed CSV inputs, exposed so in-memory panels can skip the filesystem.
struct PanelTables {
  std::string panel_text;
  std::string covariate_text;
};

}  // namespace ascpipe
