#pragma once

#include <string>
#include <vector>

#include "ascpipe/ascm.hpp"
#include "ascpipe/matcher.hpp"
#include "ascpipe/panel.hpp"

namespace ascpipe {

// Jackknife+ predictive intervals in effect space for one treated unit or
// pseudo-unit. For each pre period s the full ASC (weights + augmentation) is
// refit without s; the leave-one-out residual and leave-one-out post-period
// predictions feed the jackknife+ quantile construction with the
// ceil((1-alpha)(T0+1)) rule. Intervals are widened, when necessary, to
// contain the full-fit point estimate, which keeps levels nested.
struct JackknifeIntervals {
  std::vector<int> years;
  // level -> (lower, upper) per year, effect space.
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> intervals;
  std::vector<double> residuals;  // |leave-one-out residual| per pre period
};
JackknifeIntervals jackknife_plus(const UnitProblem& problem, const StudyConfig& config,
                                  const std::vector<double>& point_effects,
                                  const std::vector<int>& levels);

// Pooled estimate with jackknife+ intervals at the configured levels.
PooledEstimate estimate_pooled_with_intervals(const PanelDataset& panel, const MatchResult& match,
                                              const StudyConfig& config);

struct PlaceboRun {
  int pseudo_shock_year = 0;
  EffectSeries pooled;            // pooled series with 95% intervals
  EffectSeries cross_unit_mean;   // per-unit mean effects over pseudo-post years
  std::vector<int> evaluation_years;  // years used for the spuriousness check
  double mean_effect = 0.0;           // cross-unit mean over evaluation years
  double standard_error = 0.0;        // sd across units / sqrt(N1)
  bool indistinguishable_from_zero = false;
};
struct PlaceboReport {
  std::vector<PlaceboRun> runs;
};
// Re-runs the estimation with counterfeit shock years. For pseudo years before
// the true shock the spuriousness check only evaluates years before the true
// shock year.
PlaceboReport placebo_in_time(const PanelDataset& panel, const MatchResult& match,
                              const StudyConfig& config, const std::vector<int>& pseudo_years);

struct RobustnessVariant {
  std::string label;
  int k = 5;
  bool audit = true;
};
struct RobustnessRow {
  std::string variant;
  EffectSeries pooled;
  EffectSeries cross_unit_mean;
  std::vector<std::string> retained_donors;
  bool ok = true;
  std::string error;
  bool sign_agrees_main = true;  // sign of the pooled year-(t*+2) estimate vs main
};
struct RobustnessReport {
  std::vector<RobustnessRow> rows;
  int comparison_year = 0;  // t*+2 clamped to the panel range
};
RobustnessReport robustness_suite(const PanelDataset& panel, const StudyConfig& config,
                                  const std::vector<RobustnessVariant>& variants,
                                  const AuditRule& base_audit);

}  // namespace ascpipe
