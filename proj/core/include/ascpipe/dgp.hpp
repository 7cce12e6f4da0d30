#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ascpipe/panel.hpp"

namespace ascpipe {

// Scalar coefficient surface over unit covariates. Variables: elevation, slope,
// pop_density, road_density, protected_share, forest_pct, forest_ha, wetness,
// precPC1 (alias for -wetness, matching the higher-is-drier orientation).
struct Surface {
  enum class Kind { Constant, Linear, Threshold };
  Kind kind = Kind::Constant;
  std::string var;
  double value = 0.0;      // Constant
  double coefficient = 0;  // Linear: value = coefficient * var
  double threshold = 0.0;  // Threshold: below if var < threshold, else above
  double below = 0.0;
  double above = 0.0;

  double eval(const CovariateRecord& cov, double wetness) const;
  // Parses "const:-2", "linear:precPC1:0.8", "threshold:elevation:250:-2:+1".
  static Surface parse(const std::string& text);
  std::string describe() const;
};

struct DgpSpec {
  int n_treated = 20;
  int n_donors = 100;
  int year_start = 2000;
  int year_end = 2019;
  int shock_year = 2015;
  int factor_count = 2;
  double sigma_eps = 0.1;   // idiosyncratic outcome noise
  double sigma_nu = 0.0;    // first-stage income noise
  Surface gamma;            // structural income effect on deforestation
  Surface delta;            // first-stage relevance (must be >= 0 on treated draws)
  double factor_scale = 1.0;
  std::string factor_mode = "walk";   // "walk" | "white"
  std::string loading_mode = "hull";  // "hull" | "violate"
  double treated_shift = 0.0;  // z-shift on treated wetness/elevation draws

  void validate() const;
};

DgpSpec parse_dgp_spec(const std::string& text);
DgpSpec load_dgp_spec(const std::string& path);

struct GroundTruth {
  std::vector<std::string> treated_ids;
  std::vector<double> tau_unit;            // tau(X_i) = gamma(X_i) * delta(X_i)
  std::vector<double> delta_unit;          // first-stage shift per treated unit
  double att = 0.0;                        // mean of tau_unit, constant over post years
  std::vector<double> wetness;             // latent wetness per unit, panel order
  std::vector<std::vector<double>> income; // latent W, unit x year, panel order
};

struct SimulatedPanel {
  PanelDataset panel;
  GroundTruth truth;
};

// Y_{i,t} = factor path + tau(X_i) * V_i * 1{t >= shock} + gamma(X_i) nu + eps.
// Identical (spec, seed) pairs produce bit-identical panels.
SimulatedPanel simulate_panel(const DgpSpec& spec, std::uint64_t seed);

// tau_t per post year: the mean of tau(X_i) over treated units.
std::vector<double> true_att(const SimulatedPanel& sim);

struct SignCell {
  std::string label;
  double gamma_sign = 0.0;  // analytic sign on the cell
  double tau_sign = 0.0;
  int n_units = 0;
  bool informative = true;  // false when delta == 0 on the cell
  bool pass = true;         // analytic check: sign(tau) == sign(gamma)
};
// Verifies sign(tau(x)) = sign(gamma(x)) on the cells induced by the gamma
// surface; estimated per-cell means can be checked against gamma_sign by the
// caller.
std::vector<SignCell> sign_identification_check(const DgpSpec& spec, const SimulatedPanel& sim);

// CSV text in the panel-core schemas plus a ground-truth table.
struct SimulatedFiles {
  std::string panel_csv;       // unit_id,year,outcome_pp
  std::string covariates_csv;
  std::string truth_csv;       // unit_id,tau_true
};
SimulatedFiles to_csv(const SimulatedPanel& sim);

}  // namespace ascpipe
