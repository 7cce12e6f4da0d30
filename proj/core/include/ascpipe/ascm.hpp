#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ascpipe/matcher.hpp"
#include "ascpipe/panel.hpp"

namespace ascpipe {

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

struct ScWeights {
  Eigen::VectorXd weights;   // convex, donor order of the inputs
  double objective = 0.0;    // pre-period sum of squared errors at the solution
  double pre_rmspe = 0.0;
  double balance_gap = 0.0;  // ||X_treated - X_donors * w|| at the solution
  bool balance_infeasible = false;
  bool degenerate_donors = false;  // identical donors: uniform weights returned
};

// Convex weights minimizing the pre-period squared error subject to the
// simplex constraint, with the covariate-balance constraint enforced as an
// escalating quadratic penalty. Accelerated projected descent; stops when the
// objective improves by < 1e-12 or after 10000 iterations per penalty level.
// X matrices may be empty (no balance constraint).
ScWeights fit_sc_weights(const Eigen::VectorXd& treated_pre, const Eigen::MatrixXd& donors_pre,
                         const Eigen::VectorXd& x_treated, const Eigen::MatrixXd& x_donors,
                         double balance_tolerance);

// Per-period ridge model with an unpenalized intercept, fit on standardized
// features (centering/scaling from the donor sample).
struct RidgeModel {
  double intercept = 0.0;        // mean of the donor outcomes
  Eigen::VectorXd coef;          // standardized-feature space
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;

  double predict(const Eigen::VectorXd& x) const;
};

// One model per response column: outcomes is donor x period, features donor x p.
std::vector<RidgeModel> fit_ridge_models(const Eigen::MatrixXd& donor_outcomes,
                                         const Eigen::MatrixXd& donor_features, double lambda);

struct CounterfactualSeries {
  std::vector<double> counterfactual;
  std::vector<double> synthetic;        // pure donor-weighted term
  std::vector<double> bias_correction;  // ridge adjustment term
};

// counterfactual_t = sum_j w_j Y_{j,t} + [m_t(x_i) - sum_j w_j m_t(x_j)].
CounterfactualSeries augmented_counterfactual(const Eigen::VectorXd& weights,
                                              const std::vector<RidgeModel>& ridge_models,
                                              const Eigen::MatrixXd& donors_post,
                                              const Eigen::VectorXd& feat_treated,
                                              const Eigen::MatrixXd& feat_donors);

struct AscmFit {
  std::string unit;
  std::vector<std::string> donors;
  Eigen::VectorXd weights;
  double pre_rmspe = 0.0;
  bool balance_infeasible = false;
  bool degenerate_donors = false;
  std::vector<int> post_years;
  std::vector<double> observed;
  std::vector<double> counterfactual;
  std::vector<double> effects;          // observed - counterfactual
  std::vector<double> bias_correction;
};

struct EffectSeries {
  std::vector<int> years;
  std::vector<double> point;
  // level (e.g. 90) -> (lower, upper) per year; filled by the inference module.
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> intervals;
  std::string kind;  // "pooled", "per-unit", or "cross-unit-mean"
};

// Description of one single-treated-unit fitting problem: outcome rows are the
// treated series and donor series over the full panel year range.
struct UnitProblem {
  std::string unit;
  std::vector<std::string> donor_ids;
  std::vector<int> years;               // panel years, contiguous
  Eigen::VectorXd treated_outcome;      // per year
  Eigen::MatrixXd donor_outcomes;       // donor x year
  Eigen::VectorXd x_treated;            // standardized matching covariates
  Eigen::MatrixXd x_donors;             // donor x covariate
  int shock_year = 0;
};

// Assembles the problem for one treated unit from the panel and its matched
// donor set; covariates standardized across the units involved.
UnitProblem make_unit_problem(const PanelDataset& panel, const std::string& treated_id,
                              const std::vector<std::string>& donor_ids);
UnitProblem make_pooled_problem(const PanelDataset& panel, const MatchResult& match,
                                const StudyConfig& config);

// Full ASC fit on explicit pre/evaluation period index sets (indices into
// problem.years). Evaluation periods may include pre periods (leave-one-out).
struct FitOutput {
  Eigen::VectorXd weights;
  double pre_rmspe = 0.0;
  bool balance_infeasible = false;
  bool degenerate_donors = false;
  std::vector<double> counterfactual;  // per evaluation period
  std::vector<double> synthetic;
  std::vector<double> bias_correction;
};
FitOutput fit_asc(const UnitProblem& problem, const std::vector<int>& pre_idx,
                  const std::vector<int>& eval_idx, const StudyConfig& config);

struct EffectEstimate {
  std::vector<AscmFit> fits;      // one per treated unit, panel order
  EffectSeries mean_series;       // cross-unit mean per post year
};
EffectEstimate estimate_effects(const PanelDataset& panel, const MatchResult& match,
                                const StudyConfig& config);

struct PooledEstimate {
  AscmFit fit;
  EffectSeries series;  // intervals filled by inference::jackknife_plus
};
PooledEstimate estimate_pooled(const PanelDataset& panel, const MatchResult& match,
                               const StudyConfig& config);

struct WeightRow {
  std::string treated_id;  // "__pooled__" for the pooled fit
  std::string donor_id;
  double weight;
};
std::vector<WeightRow> weight_report(const std::vector<AscmFit>& fits);

}  // namespace ascpipe
