#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ascpipe/dgp.hpp"
#include "ascpipe/inference.hpp"

using namespace ascpipe;

namespace {

SimulatedPanel make_sim(std::uint64_t seed, int n1 = 5, int n0 = 30,
                        const std::string& gamma = "const:-1") {
  DgpSpec spec;
  spec.n_treated = n1;
  spec.n_donors = n0;
  spec.gamma = Surface::parse(gamma);
  spec.delta = Surface::parse("const:0.5");
  return simulate_panel(spec, seed);
}

}  // namespace

TEST_CASE("jackknife+ intervals match a from-scratch leave-one-out enumeration") {
  const SimulatedPanel sim = make_sim(3);
  StudyConfig cfg;
  AuditRule audit;
  audit.enabled = false;
  const MatchResult match = match_nearest(sim.panel, 5, audit);
  const UnitProblem problem = make_pooled_problem(sim.panel, match, cfg);

  std::vector<int> pre, post;
  for (size_t t = 0; t < problem.years.size(); ++t) {
    (problem.years[t] < problem.shock_year ? pre : post).push_back(static_cast<int>(t));
  }
  const FitOutput full = fit_asc(problem, pre, post, cfg);
  std::vector<double> point(post.size());
  for (size_t t = 0; t < post.size(); ++t) {
    point[t] = problem.treated_outcome[post[t]] - full.counterfactual[t];
  }

  const JackknifeIntervals jk = jackknife_plus(problem, cfg, point, {80, 90, 95});
  const int t0 = static_cast<int>(pre.size());
  REQUIRE(static_cast<int>(jk.residuals.size()) == t0);

  // Oracle: refit for every held-out pre period, then apply the
  // ceil((1-alpha)(T0+1)) quantile rule with fully sorted vectors.
  std::vector<double> res(t0);
  std::vector<std::vector<double>> pred(post.size(), std::vector<double>(t0));
  for (int s = 0; s < t0; ++s) {
    std::vector<int> pre_loo;
    for (int q = 0; q < t0; ++q)
      if (q != s) pre_loo.push_back(pre[q]);
    std::vector<int> eval = {pre[s]};
    eval.insert(eval.end(), post.begin(), post.end());
    const FitOutput fo = fit_asc(problem, pre_loo, eval, cfg);
    res[s] = std::abs(problem.treated_outcome[pre[s]] - fo.counterfactual[0]);
    for (size_t t = 0; t < post.size(); ++t) pred[t][s] = fo.counterfactual[t + 1];
  }
  for (int s = 0; s < t0; ++s) CHECK(jk.residuals[s] == doctest::Approx(res[s]).epsilon(1e-10));

  for (int level : {80, 90, 95}) {
    const double alpha = 1.0 - level / 100.0;
    const int k = std::clamp(static_cast<int>(std::ceil((1.0 - alpha) * (t0 + 1))), 1, t0);
    const auto& [lo, hi] = jk.intervals.at(level);
    for (size_t t = 0; t < post.size(); ++t) {
      std::vector<double> up(t0), dn(t0);
      for (int s = 0; s < t0; ++s) {
        up[s] = pred[t][s] + res[s];
        dn[s] = pred[t][s] - res[s];
      }
      std::sort(up.begin(), up.end());
      std::sort(dn.begin(), dn.end(), std::greater<>());
      const double y = problem.treated_outcome[post[t]];
      CHECK(lo[t] == doctest::Approx(std::min(y - up[k - 1], point[t])).epsilon(1e-10));
      CHECK(hi[t] == doctest::Approx(std::max(y - dn[k - 1], point[t])).epsilon(1e-10));
    }
  }
}

TEST_CASE("interval levels are nested and contain the point estimate") {
  const SimulatedPanel sim = make_sim(8);
  StudyConfig cfg;
  AuditRule audit;
  audit.enabled = false;
  const MatchResult match = match_nearest(sim.panel, 5, audit);
  const PooledEstimate est = estimate_pooled_with_intervals(sim.panel, match, cfg);
  const auto& s = est.series;
  for (size_t t = 0; t < s.years.size(); ++t) {
    const auto& [lo80, hi80] = s.intervals.at(80);
    const auto& [lo90, hi90] = s.intervals.at(90);
    const auto& [lo95, hi95] = s.intervals.at(95);
    CHECK(lo95[t] <= lo90[t] + 1e-12);
    CHECK(lo90[t] <= lo80[t] + 1e-12);
    CHECK(hi80[t] <= hi90[t] + 1e-12);
    CHECK(hi90[t] <= hi95[t] + 1e-12);
    CHECK(lo80[t] <= s.point[t]);
    CHECK(s.point[t] <= hi80[t]);
  }
}

TEST_CASE("jackknife+ refuses too-short pre periods") {
  const SimulatedPanel sim = make_sim(9);
  StudyConfig cfg;
  AuditRule audit;
  audit.enabled = false;
  const MatchResult match = match_nearest(sim.panel, 5, audit);
  UnitProblem problem = make_pooled_problem(sim.panel, match, cfg);
  // Shrink the panel to 2 pre periods by pretending the shock came early.
  problem.shock_year = problem.years[2];
  CHECK_THROWS_WITH_AS(jackknife_plus(problem, cfg, std::vector<double>(
                                          problem.years.size() - 2),
                                      {95}),
                       doctest::Contains("3 pre periods"), std::runtime_error);
}

TEST_CASE("placebo verdicts ignore data after the true shock year") {
  const SimulatedPanel sim = make_sim(12, 5, 40);
  StudyConfig cfg;
  AuditRule audit;
  audit.enabled = false;
  const MatchResult match = match_nearest(sim.panel, 5, audit);
  const PlaceboReport clean = placebo_in_time(sim.panel, match, cfg, {2012});

  // Corrupt everything from the true shock year onward. The placebo evaluation
  // window (2012..2014) precedes the true shock, so its numbers must not move.
  PanelDataset poisoned = sim.panel;
  poisoned.forest_area.reset();
  const int shock_idx = poisoned.year_index(cfg.shock_year);
  for (auto& row : poisoned.outcome) {
    for (int t = shock_idx; t < poisoned.n_years(); ++t) row[t] += 50.0;
  }
  const PlaceboReport dirty = placebo_in_time(poisoned, match, cfg, {2012});

  REQUIRE(clean.runs.size() == 1);
  CHECK(clean.runs[0].evaluation_years == std::vector<int>{2012, 2013, 2014});
  CHECK(dirty.runs[0].mean_effect == doctest::Approx(clean.runs[0].mean_effect));
  CHECK(dirty.runs[0].standard_error == doctest::Approx(clean.runs[0].standard_error));
  for (size_t t = 0; t < clean.runs[0].pooled.years.size(); ++t) {
    if (clean.runs[0].pooled.years[t] >= cfg.shock_year) continue;
    CHECK(dirty.runs[0].pooled.point[t] == doctest::Approx(clean.runs[0].pooled.point[t]));
  }
}

TEST_CASE("placebo on a null effect is flagged as indistinguishable from zero") {
  int flagged = 0;
  const int reps = 12;
  for (int rep = 0; rep < reps; ++rep) {
    const SimulatedPanel sim = make_sim(100 + rep, 8, 50, "const:0");
    StudyConfig cfg;
    AuditRule audit;
    audit.enabled = false;
    const MatchResult match = match_nearest(sim.panel, 5, audit);
    const PlaceboReport rep_out = placebo_in_time(sim.panel, match, cfg, {2014});
    if (rep_out.runs[0].indistinguishable_from_zero) ++flagged;
  }
  CHECK(flagged >= reps - 2);
}

TEST_CASE("placebo rejects years without enough pre periods") {
  const SimulatedPanel sim = make_sim(13);
  StudyConfig cfg;
  AuditRule audit;
  audit.enabled = false;
  const MatchResult match = match_nearest(sim.panel, 5, audit);
  CHECK_THROWS_AS(placebo_in_time(sim.panel, match, cfg, {sim.panel.year_start + 1}),
                  std::runtime_error);
  CHECK_THROWS_AS(placebo_in_time(sim.panel, match, cfg, {sim.panel.year_end + 1}),
                  std::runtime_error);
}

TEST_CASE("robustness suite compares variants against the main run") {
  const SimulatedPanel sim = make_sim(21, 6, 50, "const:-4");
  StudyConfig cfg;
  AuditRule audit;
  audit.enabled = false;
  const std::vector<RobustnessVariant> variants = {
      {"k1", 1, false}, {"k10", 10, false}, {"impossible", 500, false}};
  const RobustnessReport rep = robustness_suite(sim.panel, cfg, variants, audit);
  CHECK(rep.comparison_year == cfg.shock_year + 2);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].ok);
  CHECK(rep.rows[1].ok);
  CHECK_FALSE(rep.rows[2].ok);        // 500 donors requested, far fewer exist
  CHECK_FALSE(rep.rows[2].error.empty());
  // A strong homogeneous effect should keep its sign across k.
  CHECK(rep.rows[0].sign_agrees_main);
  CHECK(rep.rows[1].sign_agrees_main);
  CHECK(rep.rows[1].retained_donors.size() >= rep.rows[0].retained_donors.size());
}
