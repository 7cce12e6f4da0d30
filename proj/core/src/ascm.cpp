#include "ascpipe/ascm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ascpipe {

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) {
      rho = static_cast<int>(j + 1);
      tau = t;
    }
  }
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = std::max(v[i] - tau, 0.0);
  return w;
}

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kObjectiveTol = 1e-12;
constexpr double kPenaltyCap = 1e8;

// Minimizes 0.5 w'Hw - c'w over the simplex by accelerated projected descent.
Eigen::VectorXd solve_simplex_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& c,
                                 Eigen::VectorXd w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  const double lip = es.eigenvalues().maxCoeff();
  if (!(lip > 0.0)) return w;  // flat objective, any simplex point is optimal
  auto objective = [&](const Eigen::VectorXd& x) {
    return 0.5 * x.dot(h * x) - c.dot(x);
  };
  w = project_simplex(w);
  Eigen::VectorXd v = w;
  double t = 1.0;
  double f_best = objective(w);
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    Eigen::VectorXd grad = h * v - c;
    Eigen::VectorXd w_new = project_simplex(v - grad / lip);
    double f_new = objective(w_new);
    if (f_new > f_best) {
      // Momentum overshot: restart from the best iterate.
      v = w;
      t = 1.0;
      grad = h * w - c;
      w_new = project_simplex(w - grad / lip);
      f_new = objective(w_new);
    }
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    v = w_new + ((t - 1.0) / t_new) * (w_new - w);
    const double improvement = f_best - f_new;
    if (f_new <= f_best) {
      w = w_new;
      f_best = f_new;
    }
    t = t_new;
    if (improvement >= 0.0 && improvement < kObjectiveTol) break;
  }

  // Active-set polish: first-order iterations identify the optimal face but
  // converge slowly on it. Solving the equality-constrained QP restricted to
  // the support recovers the face optimum to machine precision.
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<int> support;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w[i] > 1e-9) support.push_back(static_cast<int>(i));
    }
    if (support.empty()) break;
    const int m = static_cast<int>(support.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs(m + 1);
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) kkt(a, b) = h(support[a], support[b]);
      kkt(a, m) = 1.0;
      kkt(m, a) = 1.0;
      rhs[a] = c[support[a]];
    }
    rhs[m] = 1.0;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    if (!sol.allFinite()) break;
    Eigen::VectorXd cand = Eigen::VectorXd::Zero(w.size());
    bool feasible = true;
    for (int a = 0; a < m; ++a) {
      if (sol[a] < -1e-10) feasible = false;
      cand[support[a]] = std::max(sol[a], 0.0);
    }
    if (!feasible || cand.sum() <= 0.0) break;
    cand /= cand.sum();
    if (objective(cand) <= f_best + 1e-15) {
      const bool same_support = (cand.array() > 1e-9).count() == m;
      w = cand;
      f_best = objective(cand);
      if (same_support) break;  // support stabilized, nothing left to refine
    } else {
      break;
    }
  }
  return w;
}

bool columns_identical(const Eigen::MatrixXd& m) {
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    if ((m.col(j) - m.col(0)).cwiseAbs().maxCoeff() > 1e-14) return false;
  }
  return true;
}

}  // namespace

ScWeights fit_sc_weights(const Eigen::VectorXd& treated_pre, const Eigen::MatrixXd& donors_pre,
                         const Eigen::VectorXd& x_treated, const Eigen::MatrixXd& x_donors,
                         double balance_tolerance) {
  const Eigen::Index t0 = treated_pre.size();
  const Eigen::Index j = donors_pre.cols();
  if (j < 1) throw std::runtime_error("fit_sc_weights: empty donor pool");
  if (donors_pre.rows() != t0) throw std::runtime_error("fit_sc_weights: period count mismatch");
  if (!treated_pre.allFinite() || !donors_pre.allFinite()) {
    throw std::runtime_error("fit_sc_weights: non-finite outcome input");
  }
  const bool have_covariates = x_donors.size() > 0;
  if (have_covariates) {
    if (x_donors.rows() != j || x_treated.size() != x_donors.cols()) {
      throw std::runtime_error("fit_sc_weights: covariate shape mismatch");
    }
    if (!x_treated.allFinite() || !x_donors.allFinite()) {
      throw std::runtime_error("fit_sc_weights: non-finite covariate input");
    }
  }

  ScWeights out;
  auto finish = [&](const Eigen::VectorXd& w) {
    Eigen::VectorXd clamped = w;
    for (Eigen::Index i = 0; i < clamped.size(); ++i) {
      if (clamped[i] < 0.0) {
        if (clamped[i] < -1e-12) throw std::runtime_error("fit_sc_weights: negative weight");
        clamped[i] = 0.0;
      }
    }
    out.weights = clamped;
    out.objective = (treated_pre - donors_pre * clamped).squaredNorm();
    out.pre_rmspe = std::sqrt(out.objective / static_cast<double>(t0));
    out.balance_gap =
        have_covariates ? (x_treated - x_donors.transpose() * clamped).norm() : 0.0;
    return out;
  };

  if (j == 1) {
    return finish(Eigen::VectorXd::Ones(1));
  }
  if (columns_identical(donors_pre) &&
      (!have_covariates || columns_identical(x_donors.transpose()))) {
    out.degenerate_donors = true;
    return finish(Eigen::VectorXd::Constant(j, 1.0 / static_cast<double>(j)));
  }

  const Eigen::MatrixXd dtd = donors_pre.transpose() * donors_pre;
  const Eigen::VectorXd dty = donors_pre.transpose() * treated_pre;
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xtc;
  if (have_covariates) {
    xtx = x_donors * x_donors.transpose();
    xtc = x_donors * x_treated;
  }

  Eigen::VectorXd w = Eigen::VectorXd::Constant(j, 1.0 / static_cast<double>(j));
  double mu = 0.0;
  while (true) {
    Eigen::MatrixXd h = 2.0 * dtd;
    Eigen::VectorXd c = 2.0 * dty;
    if (have_covariates && mu > 0.0) {
      h += 2.0 * mu * xtx;
      c += 2.0 * mu * xtc;
    }
    w = solve_simplex_qp(h, c, w);
    if (!have_covariates) break;
    const double gap = (x_treated - x_donors.transpose() * w).norm();
    if (gap <= balance_tolerance) break;
    if (mu >= kPenaltyCap) {
      out.balance_infeasible = true;
      break;
    }
    mu = (mu == 0.0) ? 1.0 : mu * 10.0;
  }
  return finish(w);
}

double RidgeModel::predict(const Eigen::VectorXd& x) const {
  if (x.size() != coef.size()) throw std::runtime_error("RidgeModel: feature length mismatch");
  Eigen::VectorXd z = (x - feature_mean).cwiseQuotient(feature_scale);
  return intercept + coef.dot(z);
}

std::vector<RidgeModel> fit_ridge_models(const Eigen::MatrixXd& donor_outcomes,
                                         const Eigen::MatrixXd& donor_features, double lambda) {
  const Eigen::Index n = donor_outcomes.rows();
  const Eigen::Index p = donor_features.cols();
  if (n < 1) throw std::runtime_error("fit_ridge_models: empty donor pool");
  if (donor_features.rows() != n) throw std::runtime_error("fit_ridge_models: row mismatch");
  if (!donor_outcomes.allFinite() || !donor_features.allFinite()) {
    throw std::runtime_error("fit_ridge_models: non-finite input");
  }
  if (lambda < 0.0) throw std::runtime_error("fit_ridge_models: lambda must be >= 0");

  Eigen::VectorXd mean = donor_features.colwise().mean();
  Eigen::MatrixXd centered = donor_features.rowwise() - mean.transpose();
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double sd =
        n > 1 ? std::sqrt(centered.col(k).squaredNorm() / static_cast<double>(n - 1)) : 0.0;
    if (sd > 0.0) scale[k] = sd;  // constant donor features keep scale 1, coef 0
  }
  Eigen::MatrixXd z = centered.array().rowwise() / scale.transpose().array();

  Eigen::MatrixXd gram = z.transpose() * z;
  gram.diagonal().array() += lambda;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (lambda == 0.0 && !lu.isInvertible()) {
    throw std::runtime_error(
        "fit_ridge_models: singular normal equations at lambda=0; use lambda > 0");
  }

  std::vector<RidgeModel> models;
  models.reserve(donor_outcomes.cols());
  for (Eigen::Index t = 0; t < donor_outcomes.cols(); ++t) {
    RidgeModel m;
    m.intercept = donor_outcomes.col(t).mean();
    Eigen::VectorXd yc = donor_outcomes.col(t).array() - m.intercept;
    m.coef = lu.solve(z.transpose() * yc);
    m.feature_mean = mean;
    m.feature_scale = scale;
    models.push_back(std::move(m));
  }
  return models;
}

CounterfactualSeries augmented_counterfactual(const Eigen::VectorXd& weights,
                                              const std::vector<RidgeModel>& ridge_models,
                                              const Eigen::MatrixXd& donors_post,
                                              const Eigen::VectorXd& feat_treated,
                                              const Eigen::MatrixXd& feat_donors) {
  const Eigen::Index j = weights.size();
  if (donors_post.rows() != j || feat_donors.rows() != j) {
    throw std::runtime_error("augmented_counterfactual: donor ordering mismatch");
  }
  if (static_cast<Eigen::Index>(ridge_models.size()) != donors_post.cols()) {
    throw std::runtime_error("augmented_counterfactual: one ridge model per period required");
  }
  CounterfactualSeries out;
  for (Eigen::Index t = 0; t < donors_post.cols(); ++t) {
    const RidgeModel& m = ridge_models[t];
    const double synthetic = weights.dot(donors_post.col(t));
    double donor_pred = 0.0;
    for (Eigen::Index k = 0; k < j; ++k) {
      donor_pred += weights[k] * m.predict(feat_donors.row(k));
    }
    const double correction = m.predict(feat_treated) - donor_pred;
    out.synthetic.push_back(synthetic);
    out.bias_correction.push_back(correction);
    out.counterfactual.push_back(synthetic + correction);
  }
  return out;
}

namespace {

// Standardized matching-covariate rows for the panel plus an optional pooled
// record appended last.
Eigen::MatrixXd standardized_covariates(const PanelDataset& panel,
                                        const CovariateRecord* pooled) {
  const CovariateTable table = build_covariate_table(panel);
  auto [z, stz] = standardize(table.values, matching_covariate_names());
  if (!pooled) return z;
  Eigen::VectorXd raw(9);
  Eigen::VectorXd precip(12);
  for (int m = 0; m < 12; ++m) precip[m] = pooled->prec_monthly[m];
  Eigen::VectorXd pcs = table.precipitation_pca.transform(precip);
  raw << pooled->forest_pct_base, pooled->forest_ha_base, pooled->pop_density,
      pooled->elevation_m, pooled->slope_deg, pcs[0] * (table.pc1_flipped ? -1.0 : 1.0), pcs[1],
      pooled->protected_share, pooled->road_density;
  Eigen::MatrixXd out(z.rows() + 1, 9);
  out.topRows(z.rows()) = z;
  out.row(z.rows()) = ((raw - stz.mean).cwiseQuotient(stz.sd)).transpose();
  return out;
}

UnitProblem assemble_problem(const PanelDataset& panel, const std::string& unit,
                             const Eigen::VectorXd& treated_outcome,
                             const Eigen::VectorXd& x_treated,
                             const std::vector<std::string>& donor_ids,
                             const Eigen::MatrixXd& z) {
  UnitProblem p;
  p.unit = unit;
  p.donor_ids = donor_ids;
  p.shock_year = panel.shock_year;
  for (int y = panel.year_start; y <= panel.year_end; ++y) p.years.push_back(y);
  p.treated_outcome = treated_outcome;
  p.x_treated = x_treated;
  p.donor_outcomes.resize(donor_ids.size(), panel.n_years());
  p.x_donors.resize(donor_ids.size(), 9);
  for (size_t r = 0; r < donor_ids.size(); ++r) {
    const int j = panel.unit_index(donor_ids[r]);
    if (panel.exposure[j]) {
      throw std::runtime_error("donor '" + donor_ids[r] + "' is a treated unit");
    }
    for (int t = 0; t < panel.n_years(); ++t) p.donor_outcomes(r, t) = panel.outcome[j][t];
    p.x_donors.row(r) = z.row(j);
  }
  return p;
}

}  // namespace

UnitProblem make_unit_problem(const PanelDataset& panel, const std::string& treated_id,
                              const std::vector<std::string>& donor_ids) {
  const Eigen::MatrixXd z = standardized_covariates(panel, nullptr);
  const int i = panel.unit_index(treated_id);
  Eigen::VectorXd y(panel.n_years());
  for (int t = 0; t < panel.n_years(); ++t) y[t] = panel.outcome[i][t];
  return assemble_problem(panel, treated_id, y, z.row(i), donor_ids, z);
}

UnitProblem make_pooled_problem(const PanelDataset& panel, const MatchResult& match,
                                const StudyConfig& config) {
  const PooledUnit pooled = pool_treated(panel, config.pool_weight);
  const Eigen::MatrixXd z = standardized_covariates(panel, &pooled.covariates);
  Eigen::VectorXd y(panel.n_years());
  for (int t = 0; t < panel.n_years(); ++t) y[t] = pooled.outcome[t];
  return assemble_problem(panel, "__pooled__", y, z.row(z.rows() - 1), match.retained_donors, z);
}

FitOutput fit_asc(const UnitProblem& problem, const std::vector<int>& pre_idx,
                  const std::vector<int>& eval_idx, const StudyConfig& config) {
  const int j = static_cast<int>(problem.donor_ids.size());
  const int t0 = static_cast<int>(pre_idx.size());
  if (t0 < 2) throw std::runtime_error("fit_asc: at least 2 pre periods required");

  Eigen::VectorXd treated_pre(t0);
  Eigen::MatrixXd donors_pre(t0, j);
  for (int s = 0; s < t0; ++s) {
    treated_pre[s] = problem.treated_outcome[pre_idx[s]];
    donors_pre.row(s) = problem.donor_outcomes.col(pre_idx[s]).transpose();
  }

  ScWeights sw = fit_sc_weights(treated_pre, donors_pre, problem.x_treated, problem.x_donors,
                                config.balance_tolerance);

  // Augmentation features: matching covariates plus the last lag_count
  // pre-period outcomes (chronological order).
  std::vector<int> lag_idx(pre_idx.begin() + std::max(0, t0 - config.lag_count), pre_idx.end());
  const int n_cov = static_cast<int>(problem.x_treated.size());
  const int p = n_cov + static_cast<int>(lag_idx.size());
  Eigen::MatrixXd feat_donors(j, p);
  Eigen::VectorXd feat_treated(p);
  feat_treated.head(n_cov) = problem.x_treated;
  for (int r = 0; r < j; ++r) feat_donors.row(r).head(n_cov) = problem.x_donors.row(r);
  for (size_t l = 0; l < lag_idx.size(); ++l) {
    feat_treated[n_cov + l] = problem.treated_outcome[lag_idx[l]];
    for (int r = 0; r < j; ++r) {
      feat_donors(r, n_cov + l) = problem.donor_outcomes(r, lag_idx[l]);
    }
  }

  Eigen::MatrixXd donors_eval(j, eval_idx.size());
  for (size_t e = 0; e < eval_idx.size(); ++e) donors_eval.col(e) = problem.donor_outcomes.col(eval_idx[e]);

  const auto models = fit_ridge_models(donors_eval, feat_donors, config.ridge_lambda);
  const auto cf = augmented_counterfactual(sw.weights, models, donors_eval, feat_treated,
                                           feat_donors);

  FitOutput out;
  out.weights = sw.weights;
  out.pre_rmspe = sw.pre_rmspe;
  out.balance_infeasible = sw.balance_infeasible;
  out.degenerate_donors = sw.degenerate_donors;
  out.counterfactual = cf.counterfactual;
  out.synthetic = cf.synthetic;
  out.bias_correction = cf.bias_correction;
  return out;
}

namespace {

std::vector<int> index_range(const UnitProblem& p, bool pre) {
  std::vector<int> idx;
  for (size_t t = 0; t < p.years.size(); ++t) {
    if ((p.years[t] < p.shock_year) == pre) idx.push_back(static_cast<int>(t));
  }
  return idx;
}

AscmFit to_ascm_fit(const UnitProblem& problem, const FitOutput& fo,
                    const std::vector<int>& eval_idx) {
  AscmFit fit;
  fit.unit = problem.unit;
  fit.donors = problem.donor_ids;
  fit.weights = fo.weights;
  fit.pre_rmspe = fo.pre_rmspe;
  fit.balance_infeasible = fo.balance_infeasible;
  fit.degenerate_donors = fo.degenerate_donors;
  for (size_t e = 0; e < eval_idx.size(); ++e) {
    fit.post_years.push_back(problem.years[eval_idx[e]]);
    fit.observed.push_back(problem.treated_outcome[eval_idx[e]]);
    fit.counterfactual.push_back(fo.counterfactual[e]);
    fit.effects.push_back(problem.treated_outcome[eval_idx[e]] - fo.counterfactual[e]);
    fit.bias_correction.push_back(fo.bias_correction[e]);
  }
  return fit;
}

}  // namespace

EffectEstimate estimate_effects(const PanelDataset& panel, const MatchResult& match,
                                const StudyConfig& config) {
  EffectEstimate out;
  for (size_t i = 0; i < match.treated_ids.size(); ++i) {
    try {
      UnitProblem problem = make_unit_problem(panel, match.treated_ids[i], match.donor_sets[i]);
      const auto pre = index_range(problem, true);
      const auto post = index_range(problem, false);
      FitOutput fo = fit_asc(problem, pre, post, config);
      out.fits.push_back(to_ascm_fit(problem, fo, post));
    } catch (const std::exception& e) {
      throw std::runtime_error("fit failed for treated unit '" + match.treated_ids[i] +
                               "': " + e.what());
    }
  }
  out.mean_series.kind = "cross-unit-mean";
  out.mean_series.years = panel.post_years();
  out.mean_series.point.assign(out.mean_series.years.size(), 0.0);
  for (const auto& fit : out.fits) {
    for (size_t t = 0; t < fit.effects.size(); ++t) out.mean_series.point[t] += fit.effects[t];
  }
  for (auto& v : out.mean_series.point) v /= static_cast<double>(out.fits.size());
  return out;
}

PooledEstimate estimate_pooled(const PanelDataset& panel, const MatchResult& match,
                               const StudyConfig& config) {
  UnitProblem problem = make_pooled_problem(panel, match, config);
  const auto pre = index_range(problem, true);
  const auto post = index_range(problem, false);
  FitOutput fo = fit_asc(problem, pre, post, config);
  PooledEstimate out;
  out.fit = to_ascm_fit(problem, fo, post);
  out.series.kind = "pooled";
  out.series.years = out.fit.post_years;
  out.series.point = out.fit.effects;
  return out;
}

std::vector<WeightRow> weight_report(const std::vector<AscmFit>& fits) {
  std::vector<WeightRow> rows;
  for (const auto& fit : fits) {
    for (size_t d = 0; d < fit.donors.size(); ++d) {
      rows.push_back({fit.unit, fit.donors[d], fit.weights[static_cast<Eigen::Index>(d)]});
    }
  }
  if (fits.size() > 1) {
    std::map<std::string, double> mean_w;
    for (const auto& fit : fits) {
      for (size_t d = 0; d < fit.donors.size(); ++d) {
        mean_w[fit.donors[d]] += fit.weights[static_cast<Eigen::Index>(d)];
      }
    }
    for (auto& [donor, w] : mean_w) {
      rows.push_back({"__mean__", donor, w / static_cast<double>(fits.size())});
    }
  }
  return rows;
}

}  // namespace ascpipe
