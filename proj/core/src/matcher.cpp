#include "ascpipe/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ascpipe {

const std::vector<std::string>& matching_covariate_names() {
  static const std::vector<std::string> names = {
      "forest_pct_base", "forest_ha_base", "pop_density", "elevation_m", "slope_deg",
      "prec_pc1",        "prec_pc2",       "protected_share", "road_density"};
  return names;
}

CovariateTable build_covariate_table(const PanelDataset& panel) {
  const int n = panel.n_units();
  Eigen::MatrixXd precip(n, 12);
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < 12; ++m) precip(i, m) = panel.covariates[i].prec_monthly[m];
  }
  CovariateTable table;
  table.precipitation_pca = pca_fit(precip, /*scale=*/true);

  // Orient PC1 so higher scores mean drier: its correlation with annual total
  // precipitation must be nonpositive.
  Eigen::VectorXd annual = precip.rowwise().sum();
  Eigen::VectorXd pc1 = table.precipitation_pca.scores.col(0);
  const double cov = ((annual.array() - annual.mean()) * (pc1.array() - pc1.mean())).sum();
  if (cov > 0.0) {
    table.precipitation_pca.scores.col(0) *= -1.0;
    table.precipitation_pca.loadings.row(0) *= -1.0;
    table.pc1_flipped = true;
  }

  table.values.resize(n, 9);
  for (int i = 0; i < n; ++i) {
    const auto& c = panel.covariates[i];
    table.values(i, 0) = c.forest_pct_base;
    table.values(i, 1) = c.forest_ha_base;
    table.values(i, 2) = c.pop_density;
    table.values(i, 3) = c.elevation_m;
    table.values(i, 4) = c.slope_deg;
    table.values(i, 5) = table.precipitation_pca.scores(i, 0);
    table.values(i, 6) = table.precipitation_pca.scores(i, 1);
    table.values(i, 7) = c.protected_share;
    table.values(i, 8) = c.road_density;
  }
  return table;
}

std::pair<Eigen::MatrixXd, Standardization> standardize(
    const Eigen::MatrixXd& table, const std::vector<std::string>& names) {
  const Eigen::Index n = table.rows();
  if (n < 2) throw std::runtime_error("standardize needs at least 2 units");
  Standardization s;
  s.mean = table.colwise().mean();
  s.sd.resize(table.cols());
  Eigen::MatrixXd z = table.rowwise() - s.mean.transpose();
  for (Eigen::Index j = 0; j < table.cols(); ++j) {
    const double sd = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(n - 1));
    if (sd <= 0.0) {
      const std::string name =
          j < static_cast<Eigen::Index>(names.size()) ? names[j] : std::to_string(j);
      throw std::runtime_error("standardize: covariate '" + name + "' is constant");
    }
    s.sd[j] = sd;
    z.col(j) /= sd;
  }
  return {std::move(z), std::move(s)};
}

namespace {

double sample_sd(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1));
}

// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) throw std::runtime_error("quantile of empty sample");
  const double pos = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

double smd(const std::vector<double>& treated, const std::vector<double>& control,
           const std::vector<double>* control_weights) {
  if (treated.empty() || control.empty()) throw std::runtime_error("smd: empty group");
  double mean_t = 0.0;
  for (double x : treated) mean_t += x;
  mean_t /= static_cast<double>(treated.size());
  const double sd_t = sample_sd(treated);

  double mean_c = 0.0, sd_c = 0.0;
  if (control_weights) {
    if (control_weights->size() != control.size()) {
      throw std::runtime_error("smd: weight length mismatch");
    }
    double wsum = 0.0;
    for (size_t i = 0; i < control.size(); ++i) {
      mean_c += (*control_weights)[i] * control[i];
      wsum += (*control_weights)[i];
    }
    if (wsum <= 0.0) throw std::runtime_error("smd: zero total control weight");
    mean_c /= wsum;
    // Frequency-weight variance: matches pooling duplicated donor entries.
    double ss = 0.0;
    for (size_t i = 0; i < control.size(); ++i) {
      ss += (*control_weights)[i] * (control[i] - mean_c) * (control[i] - mean_c);
    }
    sd_c = wsum > 1.0 ? std::sqrt(ss / (wsum - 1.0)) : 0.0;
  } else {
    for (double x : control) mean_c += x;
    mean_c /= static_cast<double>(control.size());
    sd_c = sample_sd(control);
  }

  const double pooled = std::sqrt((sd_t * sd_t + sd_c * sd_c) / 2.0);
  if (pooled <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (mean_t - mean_c) / pooled;
}

MatchResult match_nearest(const PanelDataset& panel, int k, const AuditRule& audit,
                          MatchMetric metric) {
  if (k < 1) throw std::runtime_error("match_nearest: k must be >= 1");
  const CovariateTable table = build_covariate_table(panel);
  auto [z, stz] = standardize(table.values, matching_covariate_names());

  const auto treated = panel.treated_indices();
  const auto donors_all = panel.donor_indices();

  // Audit: drop donors flagged too dry or explicitly excluded. Treated units
  // are never removed.
  std::vector<int> donors;
  std::vector<std::string> audited_out;
  double wet_threshold = -std::numeric_limits<double>::infinity();
  if (audit.enabled) {
    std::vector<double> treated_wetness;
    for (int i : treated) treated_wetness.push_back(-table.precipitation_pca.scores(i, 0));
    wet_threshold = quantile(treated_wetness, audit.dryness_quantile);
  }
  for (int j : donors_all) {
    const bool too_dry =
        audit.enabled && (-table.precipitation_pca.scores(j, 0)) < wet_threshold;
    const bool listed = audit.exclude.count(panel.units[j]) > 0;
    if (too_dry || listed) {
      audited_out.push_back(panel.units[j]);
    } else {
      donors.push_back(j);
    }
  }
  if (static_cast<int>(donors.size()) < k) {
    throw std::runtime_error("match_nearest: only " + std::to_string(donors.size()) +
                             " audited donors remain, need k=" + std::to_string(k));
  }

  Eigen::MatrixXd metric_inv;  // inverse covariance for Mahalanobis
  if (metric == MatchMetric::Mahalanobis) {
    Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(z.rows() - 1);
    metric_inv = cov.completeOrthogonalDecomposition().pseudoInverse();
  }
  auto distance = [&](int a, int b) {
    Eigen::VectorXd d = z.row(a) - z.row(b);
    if (metric == MatchMetric::Mahalanobis) return std::sqrt(std::max(0.0, d.dot(metric_inv * d)));
    return d.norm();
  };

  MatchResult result;
  result.k = k;
  result.metric = metric;
  result.audited_out = audited_out;

  std::set<std::string> retained;
  std::vector<double> mult(panel.n_units(), 0.0);  // donor multiplicities
  for (int i : treated) {
    std::vector<std::pair<double, int>> cand;
    cand.reserve(donors.size());
    for (int j : donors) cand.emplace_back(distance(i, j), j);
    std::sort(cand.begin(), cand.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return panel.units[a.second] < panel.units[b.second];
    });
    std::vector<std::string> set_ids;
    std::vector<double> set_dist;
    for (int r = 0; r < k; ++r) {
      set_ids.push_back(panel.units[cand[r].second]);
      set_dist.push_back(cand[r].first);
      retained.insert(panel.units[cand[r].second]);
      mult[cand[r].second] += 1.0;
    }
    result.treated_ids.push_back(panel.units[i]);
    result.donor_sets.push_back(std::move(set_ids));
    result.distances.push_back(std::move(set_dist));
  }
  result.retained_donors.assign(retained.begin(), retained.end());

  // Balance: pre uses the full donor pool, post uses matched donors weighted by
  // how many treated units they serve.
  const auto& names = matching_covariate_names();
  for (int c = 0; c < 9; ++c) {
    std::vector<double> vt, vc_pre, vc_post, w_post;
    for (int i : treated) vt.push_back(table.values(i, c));
    for (int j : donors_all) vc_pre.push_back(table.values(j, c));
    for (int j : donors) {
      if (mult[j] > 0.0) {
        vc_post.push_back(table.values(j, c));
        w_post.push_back(mult[j]);
      }
    }
    result.balance[names[c]] = {smd(vt, vc_pre), smd(vt, vc_post, &w_post)};
  }
  return result;
}

std::vector<BalanceRow> balance_report(const MatchResult& match) {
  std::vector<BalanceRow> rows;
  for (const auto& name : matching_covariate_names()) {
    auto it = match.balance.find(name);
    if (it == match.balance.end()) continue;
    rows.push_back({name, it->second.first, it->second.second});
  }
  return rows;
}

}  // namespace ascpipe
