#include "ascpipe/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ascpipe {

namespace {

std::vector<int> period_indices(const UnitProblem& p, bool pre) {
  std::vector<int> idx;
  for (size_t t = 0; t < p.years.size(); ++t) {
    if ((p.years[t] < p.shock_year) == pre) idx.push_back(static_cast<int>(t));
  }
  return idx;
}

double kth_smallest(std::vector<double> v, int k) {
  std::nth_element(v.begin(), v.begin() + (k - 1), v.end());
  return v[k - 1];
}

}  // namespace

JackknifeIntervals jackknife_plus(const UnitProblem& problem, const StudyConfig& config,
                                  const std::vector<double>& point_effects,
                                  const std::vector<int>& levels) {
  const auto pre_idx = period_indices(problem, true);
  const auto post_idx = period_indices(problem, false);
  const int t0 = static_cast<int>(pre_idx.size());
  if (t0 < 3) throw std::runtime_error("jackknife_plus requires at least 3 pre periods");
  if (point_effects.size() != post_idx.size()) {
    throw std::runtime_error("jackknife_plus: point estimate length mismatch");
  }

  // Leave-one-out refits: residual at the held-out period plus post predictions.
  std::vector<double> abs_residuals(t0);
  std::vector<std::vector<double>> loo_pred(post_idx.size(), std::vector<double>(t0));
  for (int s = 0; s < t0; ++s) {
    std::vector<int> pre_loo;
    std::vector<int> eval_idx;
    for (int q = 0; q < t0; ++q) {
      if (q != s) pre_loo.push_back(pre_idx[q]);
    }
    eval_idx.push_back(pre_idx[s]);
    eval_idx.insert(eval_idx.end(), post_idx.begin(), post_idx.end());
    FitOutput fo;
    try {
      fo = fit_asc(problem, pre_loo, eval_idx, config);
    } catch (const std::exception& e) {
      throw std::runtime_error("jackknife_plus: refit failed leaving out year " +
                               std::to_string(problem.years[pre_idx[s]]) + ": " + e.what());
    }
    abs_residuals[s] = std::abs(problem.treated_outcome[pre_idx[s]] - fo.counterfactual[0]);
    for (size_t t = 0; t < post_idx.size(); ++t) loo_pred[t][s] = fo.counterfactual[t + 1];
  }

  JackknifeIntervals out;
  out.residuals = abs_residuals;
  for (int idx : post_idx) out.years.push_back(problem.years[idx]);

  for (int level : levels) {
    const double alpha = 1.0 - static_cast<double>(level) / 100.0;
    int k = static_cast<int>(std::ceil((1.0 - alpha) * (t0 + 1)));
    k = std::clamp(k, 1, t0);
    std::vector<double> lo(post_idx.size()), hi(post_idx.size());
    for (size_t t = 0; t < post_idx.size(); ++t) {
      std::vector<double> upper(t0), lower(t0);
      for (int s = 0; s < t0; ++s) {
        upper[s] = loo_pred[t][s] + abs_residuals[s];
        lower[s] = loo_pred[t][s] - abs_residuals[s];
      }
      const double q_hi = kth_smallest(upper, k);           // k-th smallest upper
      const double q_lo = kth_smallest(lower, t0 + 1 - k);  // k-th largest lower
      const double y = problem.treated_outcome[post_idx[t]];
      lo[t] = std::min(y - q_hi, point_effects[t]);
      hi[t] = std::max(y - q_lo, point_effects[t]);
    }
    out.intervals[level] = {std::move(lo), std::move(hi)};
  }
  return out;
}

PooledEstimate estimate_pooled_with_intervals(const PanelDataset& panel, const MatchResult& match,
                                              const StudyConfig& config) {
  PooledEstimate est = estimate_pooled(panel, match, config);
  UnitProblem problem = make_pooled_problem(panel, match, config);
  JackknifeIntervals jk = jackknife_plus(problem, config, est.series.point, config.ci_levels);
  est.series.intervals = jk.intervals;
  return est;
}

PlaceboReport placebo_in_time(const PanelDataset& panel, const MatchResult& match,
                              const StudyConfig& config, const std::vector<int>& pseudo_years) {
  PlaceboReport report;
  for (int pseudo : pseudo_years) {
    if (pseudo <= panel.year_start || pseudo > panel.year_end) {
      throw std::runtime_error("placebo year " + std::to_string(pseudo) +
                               " outside the panel year range");
    }
    if (pseudo - panel.year_start < 2) {
      throw std::runtime_error("placebo year " + std::to_string(pseudo) +
                               " admits fewer than 2 pre periods");
    }
    PanelDataset shifted = panel;
    shifted.shock_year = pseudo;
    StudyConfig cfg = config;
    cfg.shock_year = pseudo;

    PlaceboRun run;
    run.pseudo_shock_year = pseudo;
    std::vector<int> levels = {95};
    PooledEstimate pooled = estimate_pooled(shifted, match, cfg);
    UnitProblem pooled_problem = make_pooled_problem(shifted, match, cfg);
    pooled.series.intervals =
        jackknife_plus(pooled_problem, cfg, pooled.series.point, levels).intervals;
    run.pooled = pooled.series;

    EffectEstimate per_unit = estimate_effects(shifted, match, cfg);
    run.cross_unit_mean = per_unit.mean_series;

    // Spuriousness check: for counterfeit shocks before the true shock year,
    // only years preceding the true shock count as evidence.
    for (int y = pseudo; y <= panel.year_end; ++y) {
      if (pseudo < config.shock_year && y >= config.shock_year) break;
      run.evaluation_years.push_back(y);
    }
    const int n1 = static_cast<int>(per_unit.fits.size());
    std::vector<double> unit_means;
    for (const auto& fit : per_unit.fits) {
      double m = 0.0;
      int cnt = 0;
      for (size_t t = 0; t < fit.post_years.size(); ++t) {
        if (std::find(run.evaluation_years.begin(), run.evaluation_years.end(),
                      fit.post_years[t]) != run.evaluation_years.end()) {
          m += fit.effects[t];
          ++cnt;
        }
      }
      if (cnt > 0) unit_means.push_back(m / cnt);
    }
    if (!unit_means.empty()) {
      double mean = 0.0;
      for (double m : unit_means) mean += m;
      mean /= static_cast<double>(unit_means.size());
      double ss = 0.0;
      for (double m : unit_means) ss += (m - mean) * (m - mean);
      const double sd = unit_means.size() > 1
                            ? std::sqrt(ss / static_cast<double>(unit_means.size() - 1))
                            : 0.0;
      run.mean_effect = mean;
      run.standard_error = sd / std::sqrt(static_cast<double>(n1));
      run.indistinguishable_from_zero = std::abs(mean) <= 2.0 * run.standard_error;
    }
    report.runs.push_back(std::move(run));
  }
  return report;
}

RobustnessReport robustness_suite(const PanelDataset& panel, const StudyConfig& config,
                                  const std::vector<RobustnessVariant>& variants,
                                  const AuditRule& base_audit) {
  RobustnessReport report;
  report.comparison_year = std::min(config.shock_year + 2, panel.year_end);
  const int comp_idx = report.comparison_year - config.shock_year;

  MatchResult main_match = match_nearest(panel, config.match_count, base_audit);
  PooledEstimate main_pooled = estimate_pooled(panel, main_match, config);
  const double main_effect = main_pooled.series.point[comp_idx];

  for (const auto& variant : variants) {
    RobustnessRow row;
    row.variant = variant.label;
    try {
      AuditRule audit = base_audit;
      audit.enabled = variant.audit;
      StudyConfig cfg = config;
      cfg.match_count = variant.k;
      MatchResult match = match_nearest(panel, variant.k, audit);
      row.retained_donors = match.retained_donors;
      PooledEstimate pooled = estimate_pooled(panel, match, cfg);
      row.pooled = pooled.series;
      EffectEstimate per_unit = estimate_effects(panel, match, cfg);
      row.cross_unit_mean = per_unit.mean_series;
      const double v = pooled.series.point[comp_idx];
      row.sign_agrees_main = (v >= 0.0) == (main_effect >= 0.0);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace ascpipe
