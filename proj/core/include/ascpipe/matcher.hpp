#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ascpipe/panel.hpp"
#include "ascpipe/pca.hpp"

namespace ascpipe {

// Names of the matching covariates, in column order.
const std::vector<std::string>& matching_covariate_names();

// Matching covariate matrix (unit x 9). Precipitation PC1/PC2 come from a PCA
// of the monthly precipitation of all units, oriented so higher PC1 = drier.
struct CovariateTable {
  Eigen::MatrixXd values;  // unit x covariate, panel unit order
  PcaModel precipitation_pca;
  bool pc1_flipped = false;  // true if PC1 was negated to make higher = drier
};
CovariateTable build_covariate_table(const PanelDataset& panel);

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // sample (n-1) convention
};
// Z-scores each column; throws naming the covariate on a constant column.
std::pair<Eigen::MatrixXd, Standardization> standardize(
    const Eigen::MatrixXd& table, const std::vector<std::string>& names);

struct AuditRule {
  bool enabled = true;
  // Donors whose wetness (-PC1 score) falls below this quantile of the treated
  // wetness distribution are excluded as too dry.
  double dryness_quantile = 0.01;
  std::set<std::string> exclude;  // explicit exclusions by unit id
};

enum class MatchMetric { Euclidean, Mahalanobis };

struct MatchResult {
  std::vector<std::string> treated_ids;
  std::vector<std::vector<std::string>> donor_sets;  // K ids each, distance order
  std::vector<std::vector<double>> distances;        // nondecreasing per set
  std::vector<std::string> retained_donors;          // sorted union
  std::vector<std::string> audited_out;              // donors removed by the audit
  // covariate -> (pre, post) standardized mean difference; NaN marks undefined.
  std::map<std::string, std::pair<double, double>> balance;
  int k = 0;
  MatchMetric metric = MatchMetric::Euclidean;
};

// (mean_t - mean_c) / sqrt((sd_t^2 + sd_c^2)/2) with optional control weights.
// Returns NaN when the pooled sd is zero (undefined, not silently zero).
double smd(const std::vector<double>& treated, const std::vector<double>& control,
           const std::vector<double>* control_weights = nullptr);

MatchResult match_nearest(const PanelDataset& panel, int k, const AuditRule& audit,
                          MatchMetric metric = MatchMetric::Euclidean);

struct BalanceRow {
  std::string covariate;
  double smd_pre;
  double smd_post;
};
std::vector<BalanceRow> balance_report(const MatchResult& match);

}  // namespace ascpipe
