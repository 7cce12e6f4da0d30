#include "ascpipe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ascpipe/csv.hpp"
#include "ascpipe/dgp.hpp"
#include "ascpipe/tree.hpp"

namespace ascpipe {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string fnv1a_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for digest");
  std::uint64_t h = 1469598103934665603ULL;
  char ch;
  while (in.get(ch)) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  std::string write_csv(const std::string& name, const csv::Table& table) {
    const fs::path p = dir_ / name;
    csv::write_file(p.string(), table);
    written_.push_back(p.string());
    return p.string();
  }

  std::string write_text(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << text;
    written_.push_back(p.string());
    return p.string();
  }

  void remove_all_written() {
    for (const auto& f : written_) {
      std::error_code ec;
      fs::remove(f, ec);
    }
    written_.clear();
  }

  std::vector<std::string> files() const {
    auto f = written_;
    std::sort(f.begin(), f.end());
    return f;
  }

 private:
  fs::path dir_;
  std::vector<std::string> written_;
};

std::string fmt(double v) { return csv::format_double(v); }

ordered_json series_to_json(const EffectSeries& s) {
  ordered_json j;
  j["kind"] = s.kind;
  j["years"] = s.years;
  j["point"] = s.point;
  ordered_json intervals = ordered_json::object();
  for (const auto& [level, bounds] : s.intervals) {
    ordered_json b;
    b["lower"] = bounds.first;
    b["upper"] = bounds.second;
    intervals[std::to_string(level)] = b;
  }
  j["intervals"] = intervals;
  return j;
}

std::set<std::string> resolve_stages(const std::vector<std::string>& requested) {
  const std::set<std::string> all = {"match", "estimate", "infer", "hetero"};
  if (requested.empty()) return all;
  std::set<std::string> out;
  for (const auto& s : requested) {
    if (!all.count(s)) {
      throw std::runtime_error("unknown stage '" + s + "' (valid: match, estimate, infer, hetero)");
    }
    out.insert(s);
  }
  return out;
}

}  // namespace

RunReport run_pipeline(const PipelineOptions& options) {
  // Validation: inputs must parse before any stage runs.
  StudyConfig config = load_config(options.config_path);
  if (options.k_override > 0) config.match_count = options.k_override;
  config.validate();
  const PanelDataset panel = load_panel(options.panel_path, options.covariates_path, config);
  const std::set<std::string> stages = resolve_stages(options.stages);

  std::optional<std::map<int, double>> price;
  if (!options.price_path.empty()) {
    price.emplace();
    const csv::Table t = csv::read_file(options.price_path);
    const int cy = t.require_column("year");
    const int cp = t.require_column("price_usd_per_kg");
    for (const auto& row : t.rows) {
      (*price)[csv::parse_int(row[cy], "price year")] =
          csv::parse_double(row[cp], "price value");
    }
  }

  ArtifactWriter writer(options.out_dir);
  ordered_json report;
  report["provenance"] = {
      {"version", kVersion},
      {"seed", config.seed},
      {"inputs",
       {{"config", fnv1a_digest(options.config_path)},
        {"panel", fnv1a_digest(options.panel_path)},
        {"covariates", fnv1a_digest(options.covariates_path)}}},
  };
  report["config"] = {
      {"shock_year", config.shock_year},   {"k", config.match_count},
      {"balance_tol", config.balance_tolerance}, {"ridge_lambda", config.ridge_lambda},
      {"lag_count", config.lag_count},     {"ci_levels", config.ci_levels},
      {"pool_weight", config.pool_weight},
      {"metric", options.metric == MatchMetric::Euclidean ? "euclidean" : "mahalanobis"},
      {"audit", options.audit.enabled},
      {"audit_quantile", options.audit.dryness_quantile},
  };

  std::string current_stage = "match";
  try {
    // ---- match ----
    MatchResult match = match_nearest(panel, config.match_count, options.audit, options.metric);
    if (stages.count("match")) {
      csv::Table mt;
      mt.header = {"treated_id", "donor_id", "rank", "distance"};
      for (size_t i = 0; i < match.treated_ids.size(); ++i) {
        for (size_t r = 0; r < match.donor_sets[i].size(); ++r) {
          mt.rows.push_back({match.treated_ids[i], match.donor_sets[i][r],
                             std::to_string(r + 1), fmt(match.distances[i][r])});
        }
      }
      writer.write_csv("match.csv", mt);

      csv::Table bt;
      bt.header = {"covariate", "smd_pre", "smd_post"};
      for (const auto& row : balance_report(match)) {
        bt.rows.push_back({row.covariate, fmt(row.smd_pre), fmt(row.smd_post)});
      }
      writer.write_csv("balance.csv", bt);
    }
    {
      ordered_json jm;
      jm["k"] = match.k;
      jm["retained_donors"] = match.retained_donors;
      jm["audited_out"] = match.audited_out;
      ordered_json balance = ordered_json::array();
      for (const auto& row : balance_report(match)) {
        balance.push_back({{"covariate", row.covariate},
                           {"smd_pre", row.smd_pre},
                           {"smd_post", row.smd_post}});
      }
      jm["balance"] = balance;
      ordered_json sets = ordered_json::object();
      for (size_t i = 0; i < match.treated_ids.size(); ++i) {
        sets[match.treated_ids[i]] = match.donor_sets[i];
      }
      jm["donor_sets"] = sets;
      report["match"] = jm;
    }

    const bool need_estimates = stages.count("estimate") || stages.count("infer") ||
                                stages.count("hetero");
    std::optional<EffectEstimate> per_unit;
    std::optional<PooledEstimate> pooled;
    if (need_estimates) {
      current_stage = "estimate";
      per_unit = estimate_effects(panel, match, config);
      pooled = estimate_pooled_with_intervals(panel, match, config);

      // Full-year gap series feed the per-unit spaghetti plot.
      ordered_json perunit_series = ordered_json::object();
      std::vector<int> all_idx(panel.n_years());
      std::vector<int> pre_idx;
      for (int t = 0; t < panel.n_years(); ++t) {
        all_idx[t] = t;
        if (panel.year_start + t < panel.shock_year) pre_idx.push_back(t);
      }
      std::vector<double> gap_mean(panel.n_years(), 0.0);
      for (size_t i = 0; i < match.treated_ids.size(); ++i) {
        UnitProblem problem = make_unit_problem(panel, match.treated_ids[i], match.donor_sets[i]);
        FitOutput fo = fit_asc(problem, pre_idx, all_idx, config);
        std::vector<double> gap(panel.n_years());
        for (int t = 0; t < panel.n_years(); ++t) {
          gap[t] = problem.treated_outcome[t] - fo.counterfactual[t];
          gap_mean[t] += gap[t] / static_cast<double>(match.treated_ids.size());
        }
        perunit_series[match.treated_ids[i]] = gap;
      }

      if (stages.count("estimate")) {
        csv::Table et;
        et.header = {"unit_id", "year",        "effect_pp",
                     "counterfactual_pp", "observed_pp", "bias_correction_pp"};
        for (const auto& fit : per_unit->fits) {
          for (size_t t = 0; t < fit.post_years.size(); ++t) {
            et.rows.push_back({fit.unit, std::to_string(fit.post_years[t]), fmt(fit.effects[t]),
                               fmt(fit.counterfactual[t]), fmt(fit.observed[t]),
                               fmt(fit.bias_correction[t])});
          }
        }
        writer.write_csv("effects_units.csv", et);

        csv::Table pt;
        pt.header = {"unit_id", "year",        "effect_pp",          "counterfactual_pp",
                     "observed_pp", "bias_correction_pp", "ci80_lo", "ci80_hi",
                     "ci90_lo", "ci90_hi", "ci95_lo", "ci95_hi"};
        for (size_t t = 0; t < pooled->fit.post_years.size(); ++t) {
          std::vector<std::string> row = {
              pooled->fit.unit, std::to_string(pooled->fit.post_years[t]),
              fmt(pooled->fit.effects[t]), fmt(pooled->fit.counterfactual[t]),
              fmt(pooled->fit.observed[t]), fmt(pooled->fit.bias_correction[t])};
          for (int level : {80, 90, 95}) {
            auto it = pooled->series.intervals.find(level);
            if (it == pooled->series.intervals.end()) {
              row.push_back("");
              row.push_back("");
            } else {
              row.push_back(fmt(it->second.first[t]));
              row.push_back(fmt(it->second.second[t]));
            }
          }
          pt.rows.push_back(row);
        }
        writer.write_csv("effects_pooled.csv", pt);

        csv::Table wt;
        wt.header = {"treated_id", "donor_id", "weight"};
        auto all_fits = per_unit->fits;
        for (const auto& row : weight_report(all_fits)) {
          wt.rows.push_back({row.treated_id, row.donor_id, fmt(row.weight)});
        }
        for (const auto& row : weight_report({pooled->fit})) {
          wt.rows.push_back({row.treated_id, row.donor_id, fmt(row.weight)});
        }
        writer.write_csv("weights.csv", wt);
      }

      ordered_json je;
      je["pooled"] = series_to_json(pooled->series);
      je["pooled_pre_rmspe"] = pooled->fit.pre_rmspe;
      je["pooled_balance_infeasible"] = pooled->fit.balance_infeasible;
      je["cross_unit_mean"] = series_to_json(per_unit->mean_series);
      ordered_json units = ordered_json::object();
      for (const auto& fit : per_unit->fits) {
        ordered_json ju;
        ju["years"] = fit.post_years;
        ju["effects"] = fit.effects;
        ju["counterfactual"] = fit.counterfactual;
        ju["observed"] = fit.observed;
        ju["bias_correction"] = fit.bias_correction;
        ju["pre_rmspe"] = fit.pre_rmspe;
        units[fit.unit] = ju;
      }
      je["units"] = units;
      ordered_json weights = ordered_json::array();
      for (const auto& row : weight_report(per_unit->fits)) {
        weights.push_back({{"treated_id", row.treated_id},
                           {"donor_id", row.donor_id},
                           {"weight", row.weight}});
      }
      for (const auto& row : weight_report({pooled->fit})) {
        weights.push_back({{"treated_id", row.treated_id},
                           {"donor_id", row.donor_id},
                           {"weight", row.weight}});
      }
      je["weights"] = weights;
      je["perunit_series"] = perunit_series;
      je["perunit_series_years"] = [&] {
        std::vector<int> years;
        for (int y = panel.year_start; y <= panel.year_end; ++y) years.push_back(y);
        return years;
      }();
      je["perunit_mean_series"] = gap_mean;
      je["perunit_plot_truncation"] = std::vector<double>{-5.5, 3.5};

      // Observed outcome overlay (treated mean vs matched donor mean, plus the
      // optional user-supplied price series).
      {
        ordered_json overlay = ordered_json::array();
        std::vector<double> mult(panel.n_units(), 0.0);
        for (const auto& set : match.donor_sets) {
          for (const auto& id : set) mult[panel.unit_index(id)] += 1.0;
        }
        const double mult_total =
            std::accumulate(mult.begin(), mult.end(), 0.0);
        for (int t = 0; t < panel.n_years(); ++t) {
          const int year = panel.year_start + t;
          double tm = 0.0;
          const auto treated = panel.treated_indices();
          for (int i : treated) tm += panel.outcome[i][t];
          tm /= static_cast<double>(treated.size());
          double cm = 0.0;
          for (int i = 0; i < panel.n_units(); ++i) cm += mult[i] * panel.outcome[i][t];
          cm /= mult_total;
          ordered_json row;
          row["year"] = year;
          row["treated_mean"] = tm;
          row["control_mean"] = cm;
          if (price && price->count(year)) row["price_usd_per_kg"] = price->at(year);
          overlay.push_back(row);
        }
        je["outcome_overlay"] = overlay;
      }
      report["estimate"] = je;
    }

    if (stages.count("infer") && per_unit) {
      current_stage = "infer";
      ordered_json ji;
      if (!options.placebo_years.empty()) {
        PlaceboReport placebo =
            placebo_in_time(panel, match, config, options.placebo_years);
        csv::Table pt;
        pt.header = {"pseudo_shock_year", "year", "effect_pp", "ci95_lo", "ci95_hi"};
        ordered_json jruns = ordered_json::array();
        for (const auto& run : placebo.runs) {
          const auto& iv = run.pooled.intervals.at(95);
          for (size_t t = 0; t < run.pooled.years.size(); ++t) {
            pt.rows.push_back({std::to_string(run.pseudo_shock_year),
                               std::to_string(run.pooled.years[t]), fmt(run.pooled.point[t]),
                               fmt(iv.first[t]), fmt(iv.second[t])});
          }
          ordered_json jr;
          jr["pseudo_shock_year"] = run.pseudo_shock_year;
          jr["pooled"] = series_to_json(run.pooled);
          jr["cross_unit_mean"] = series_to_json(run.cross_unit_mean);
          jr["evaluation_years"] = run.evaluation_years;
          jr["mean_effect"] = run.mean_effect;
          jr["standard_error"] = run.standard_error;
          jr["indistinguishable_from_zero"] = run.indistinguishable_from_zero;
          jruns.push_back(jr);
        }
        if (stages.count("infer")) writer.write_csv("placebo.csv", pt);
        ji["placebo"] = jruns;
      }
      if (!options.robustness.empty()) {
        RobustnessReport rob =
            robustness_suite(panel, config, options.robustness, options.audit);
        csv::Table rt;
        rt.header = {"variant", "year", "effect_pp", "sign_agrees_main"};
        ordered_json jrows = ordered_json::array();
        for (const auto& row : rob.rows) {
          ordered_json jr;
          jr["variant"] = row.variant;
          jr["ok"] = row.ok;
          if (!row.ok) {
            jr["error"] = row.error;
            jrows.push_back(jr);
            continue;
          }
          for (size_t t = 0; t < row.pooled.years.size(); ++t) {
            rt.rows.push_back({row.variant, std::to_string(row.pooled.years[t]),
                               fmt(row.pooled.point[t]), row.sign_agrees_main ? "1" : "0"});
          }
          jr["pooled"] = series_to_json(row.pooled);
          jr["cross_unit_mean"] = series_to_json(row.cross_unit_mean);
          jr["sign_agrees_main"] = row.sign_agrees_main;
          jr["retained_donors"] = row.retained_donors;
          jrows.push_back(jr);
        }
        writer.write_csv("robustness.csv", rt);
        ji["robustness"] = jrows;
        ji["robustness_comparison_year"] = rob.comparison_year;
      }
      report["infer"] = ji;
    }

    if (stages.count("hetero") && per_unit) {
      current_stage = "hetero";
      ordered_json jh;

      // Per-unit effect summaries over the two years after the shock.
      std::vector<int> summary_years;
      for (int y : {config.shock_year + 1, config.shock_year + 2}) {
        if (y <= panel.year_end) summary_years.push_back(y);
      }
      if (summary_years.empty()) summary_years.push_back(config.shock_year);
      std::vector<double> summaries;
      for (const auto& fit : per_unit->fits) {
        std::map<int, double> by_year;
        for (size_t t = 0; t < fit.post_years.size(); ++t) by_year[fit.post_years[t]] = fit.effects[t];
        summaries.push_back(effect_summary(by_year, summary_years));
      }
      jh["summary_years"] = summary_years;
      ordered_json jsumm = ordered_json::object();
      for (size_t i = 0; i < per_unit->fits.size(); ++i) {
        jsumm[per_unit->fits[i].unit] = summaries[i];
      }
      jh["effect_summaries"] = jsumm;

      const CovariateTable table = build_covariate_table(panel);
      const auto treated = panel.treated_indices();
      const TreeHyperparams params;
      if (static_cast<int>(treated.size()) >= params.min_split) {
        Eigen::VectorXd targets(treated.size());
        Eigen::MatrixXd x(treated.size(), 9);
        for (size_t i = 0; i < treated.size(); ++i) {
          targets[static_cast<Eigen::Index>(i)] = summaries[i];
          x.row(static_cast<Eigen::Index>(i)) = table.values.row(treated[i]);
        }
        TreeModel tree = tree_fit(targets, x, matching_covariate_names(), params);

        csv::Table tt;
        tt.header = {"node_id", "parent", "split_var", "threshold", "n", "mean", "sse"};
        ordered_json jnodes = ordered_json::array();
        for (const auto& node : tree.nodes) {
          const std::string var =
              node.split_var >= 0 ? tree.variable_names[node.split_var] : "";
          tt.rows.push_back({std::to_string(node.id), std::to_string(node.parent), var,
                             node.split_var >= 0 ? fmt(node.threshold) : "",
                             std::to_string(node.count), fmt(node.mean), fmt(node.sse)});
          jnodes.push_back({{"node_id", node.id},
                            {"parent", node.parent},
                            {"split_var", var},
                            {"threshold", node.threshold},
                            {"left", node.left},
                            {"right", node.right},
                            {"n", node.count},
                            {"mean", node.mean},
                            {"sse", node.sse}});
        }
        writer.write_csv("tree.csv", tt);
        jh["tree"] = jnodes;

        // Indented text dump.
        std::ostringstream dump;
        std::function<void(int, int)> walk = [&](int id, int depth) {
          const auto& node = tree.nodes[id];
          dump << std::string(static_cast<size_t>(depth) * 2, ' ');
          if (tree.is_leaf(id)) {
            dump << "leaf n=" << node.count << " mean=" << fmt(node.mean) << '\n';
          } else {
            dump << tree.variable_names[node.split_var] << " < " << fmt(node.threshold)
                 << " (n=" << node.count << ", mean=" << fmt(node.mean) << ")\n";
            walk(node.left, depth + 1);
            walk(node.right, depth + 1);
          }
        };
        walk(0, 0);
        writer.write_text("tree.txt", dump.str());
      } else {
        jh["tree_skipped"] = "fewer treated units than min_split";
      }

      // Precipitation PCA tables.
      csv::Table lt;
      lt.header = {"component", "variable", "loading"};
      const auto& pca = table.precipitation_pca;
      for (Eigen::Index c = 0; c < pca.loadings.rows(); ++c) {
        for (int m = 0; m < 12; ++m) {
          char var[12];
          std::snprintf(var, sizeof(var), "prec_m%02d", m + 1);
          lt.rows.push_back({std::to_string(c + 1), var, fmt(pca.loadings(c, m))});
        }
      }
      writer.write_csv("pca_loadings.csv", lt);
      csv::Table st;
      st.header = {"unit_id", "pc1", "pc2"};
      for (int i = 0; i < panel.n_units(); ++i) {
        st.rows.push_back({panel.units[i], fmt(pca.scores(i, 0)), fmt(pca.scores(i, 1))});
      }
      writer.write_csv("pca_scores.csv", st);

      ordered_json jpca;
      jpca["explained_variance"] = std::vector<double>(
          pca.explained_variance.data(), pca.explained_variance.data() + pca.explained_variance.size());
      ordered_json jload = ordered_json::array();
      for (Eigen::Index c = 0; c < 2 && c < pca.loadings.rows(); ++c) {
        jload.push_back(std::vector<double>(pca.loadings.row(c).data(),
                                            pca.loadings.row(c).data() + 12));
      }
      jpca["loadings_pc12"] = jload;
      ordered_json jscores = ordered_json::object();
      for (int i = 0; i < panel.n_units(); ++i) {
        jscores[panel.units[i]] = std::vector<double>{pca.scores(i, 0), pca.scores(i, 1)};
      }
      jpca["scores_pc12"] = jscores;
      jpca["pc1_flipped_to_dry"] = table.pc1_flipped;
      jh["pca"] = jpca;
      report["hetero"] = jh;
    }

    RunReport out;
    out.json_text = report.dump(2) + "\n";
    out.report_path = writer.write_text("report.json", out.json_text);
    out.files = writer.files();
    return out;
  } catch (const std::exception& e) {
    writer.remove_all_written();
    throw StageError(current_stage, e.what());
  }
}

std::vector<std::string> simulate_command(const std::string& spec_path, std::uint64_t seed,
                                          const std::string& out_dir) {
  const DgpSpec spec = load_dgp_spec(spec_path);
  const SimulatedPanel sim = simulate_panel(spec, seed);
  const SimulatedFiles files = to_csv(sim);
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  auto dump = [&](const std::string& name, const std::string& text) {
    const fs::path p = fs::path(out_dir) / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << text;
    written.push_back(p.string());
  };
  dump("panel.csv", files.panel_csv);
  dump("covariates.csv", files.covariates_csv);
  dump("truth.csv", files.truth_csv);
  return written;
}

const std::vector<std::string>& plot_figure_keys() {
  static const std::vector<std::string> keys = {"pooled",  "perunit", "balance",
                                                "outcome_overlay", "tree", "pca",
                                                "weights", "placebo"};
  return keys;
}

void emit_plot_data(const std::string& report_path, const std::string& figure_key,
                    const std::string& out_path) {
  std::ifstream in(report_path);
  if (!in) throw std::runtime_error("cannot open report '" + report_path + "'");
  ordered_json report = ordered_json::parse(in);

  const auto& keys = plot_figure_keys();
  if (std::find(keys.begin(), keys.end(), figure_key) == keys.end()) {
    std::string valid;
    for (const auto& k : keys) valid += (valid.empty() ? "" : ", ") + k;
    throw std::runtime_error("unknown figure key '" + figure_key + "' (valid: " + valid + ")");
  }
  auto require = [&](const char* block) -> const ordered_json& {
    if (!report.contains(block)) {
      throw std::runtime_error("report lacks the '" + std::string(block) +
                               "' analysis required by figure '" + figure_key + "'");
    }
    return report.at(block);
  };

  csv::Table t;
  if (figure_key == "pooled") {
    const auto& pooled = require("estimate").at("pooled");
    t.header = {"year", "effect", "lo80", "hi80", "lo90", "hi90", "lo95", "hi95"};
    const auto& years = pooled.at("years");
    const auto& point = pooled.at("point");
    const auto& intervals = pooled.at("intervals");
    for (size_t i = 0; i < years.size(); ++i) {
      std::vector<std::string> row = {std::to_string(years[i].get<int>()),
                                      fmt(point[i].get<double>())};
      for (const char* level : {"80", "90", "95"}) {
        if (intervals.contains(level)) {
          row.push_back(fmt(intervals[level]["lower"][i].get<double>()));
          row.push_back(fmt(intervals[level]["upper"][i].get<double>()));
        } else {
          row.push_back("");
          row.push_back("");
        }
      }
      t.rows.push_back(row);
    }
  } else if (figure_key == "perunit") {
    const auto& est = require("estimate");
    const auto& years = est.at("perunit_series_years");
    t.header = {"unit_id", "year", "effect_pp"};
    for (const auto& [unit, series] : est.at("perunit_series").items()) {
      for (size_t i = 0; i < years.size(); ++i) {
        t.rows.push_back({unit, std::to_string(years[i].get<int>()),
                          fmt(series[i].get<double>())});
      }
    }
    const auto& mean = est.at("perunit_mean_series");
    for (size_t i = 0; i < years.size(); ++i) {
      t.rows.push_back({"__mean__", std::to_string(years[i].get<int>()),
                        fmt(mean[i].get<double>())});
    }
  } else if (figure_key == "balance") {
    const auto& balance = require("match").at("balance");
    t.header = {"covariate", "smd_pre", "smd_post"};
    for (const auto& row : balance) {
      t.rows.push_back({row.at("covariate").get<std::string>(),
                        fmt(row.at("smd_pre").get<double>()),
                        fmt(row.at("smd_post").get<double>())});
    }
  } else if (figure_key == "outcome_overlay") {
    const auto& overlay = require("estimate").at("outcome_overlay");
    t.header = {"year", "treated_mean", "control_mean", "price_usd_per_kg"};
    for (const auto& row : overlay) {
      t.rows.push_back({std::to_string(row.at("year").get<int>()),
                        fmt(row.at("treated_mean").get<double>()),
                        fmt(row.at("control_mean").get<double>()),
                        row.contains("price_usd_per_kg")
                            ? fmt(row.at("price_usd_per_kg").get<double>())
                            : ""});
    }
  } else if (figure_key == "tree") {
    const auto& hetero = require("hetero");
    if (!hetero.contains("tree")) throw std::runtime_error("report lacks a fitted tree");
    t.header = {"node_id", "parent", "split_var", "threshold", "n", "mean", "sse"};
    for (const auto& node : hetero.at("tree")) {
      const bool leaf = node.at("split_var").get<std::string>().empty();
      t.rows.push_back({std::to_string(node.at("node_id").get<int>()),
                        std::to_string(node.at("parent").get<int>()),
                        node.at("split_var").get<std::string>(),
                        leaf ? "" : fmt(node.at("threshold").get<double>()),
                        std::to_string(node.at("n").get<int>()),
                        fmt(node.at("mean").get<double>()), fmt(node.at("sse").get<double>())});
    }
  } else if (figure_key == "pca") {
    const auto& pca = require("hetero").at("pca");
    t.header = {"component", "variable", "loading"};
    const auto& loadings = pca.at("loadings_pc12");
    for (size_t c = 0; c < loadings.size(); ++c) {
      for (int m = 0; m < 12; ++m) {
        char var[12];
        std::snprintf(var, sizeof(var), "prec_m%02d", m + 1);
        t.rows.push_back({std::to_string(c + 1), var, fmt(loadings[c][m].get<double>())});
      }
    }
  } else if (figure_key == "weights") {
    const auto& weights = require("estimate").at("weights");
    t.header = {"treated_id", "donor_id", "weight"};
    for (const auto& row : weights) {
      t.rows.push_back({row.at("treated_id").get<std::string>(),
                        row.at("donor_id").get<std::string>(),
                        fmt(row.at("weight").get<double>())});
    }
  } else if (figure_key == "placebo") {
    const auto& infer = require("infer");
    if (!infer.contains("placebo")) throw std::runtime_error("report lacks placebo runs");
    t.header = {"pseudo_shock_year", "year", "effect_pp", "ci95_lo", "ci95_hi"};
    for (const auto& run : infer.at("placebo")) {
      const auto& pooled = run.at("pooled");
      const auto& years = pooled.at("years");
      const auto& point = pooled.at("point");
      const auto& iv = pooled.at("intervals").at("95");
      for (size_t i = 0; i < years.size(); ++i) {
        t.rows.push_back({std::to_string(run.at("pseudo_shock_year").get<int>()),
                          std::to_string(years[i].get<int>()), fmt(point[i].get<double>()),
                          fmt(iv.at("lower")[i].get<double>()),
                          fmt(iv.at("upper")[i].get<double>())});
      }
    }
  }
  csv::write_file(out_path, t);
}

}  // namespace ascpipe
