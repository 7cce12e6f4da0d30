// Command-line front end: simulate panels, run the estimation pipeline, and
// dump figure-ready CSV extracts from a report.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ascpipe/pipeline.hpp"

namespace {

int run_simulate(const std::string& spec_path, std::uint64_t seed, const std::string& out_dir) {
  try {
    const auto files = ascpipe::simulate_command(spec_path, seed, out_dir);
    for (const auto& f : files) std::cout << f << '\n';
    return ascpipe::kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ascpipe::kValidationError;
  }
}

int run_run(const ascpipe::PipelineOptions& options) {
  try {
    const ascpipe::RunReport report = ascpipe::run_pipeline(options);
    for (const auto& f : report.files) std::cout << f << '\n';
    return ascpipe::kOk;
  } catch (const ascpipe::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ascpipe::kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ascpipe::kValidationError;
  }
}

int run_plot(const std::string& report, const std::string& figure, const std::string& out) {
  try {
    ascpipe::emit_plot_data(report, figure, out);
    std::cout << out << '\n';
    return ascpipe::kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ascpipe::kValidationError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matching-augmented synthetic control pipeline"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic panel from a DGP spec");
  std::string spec_path, sim_out;
  std::uint64_t seed = 0;
  sim->add_option("--spec", spec_path, "DGP spec file (key=value)")->required();
  sim->add_option("--seed", seed, "RNG seed")->required();
  sim->add_option("--out", sim_out, "Output directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Run the estimation pipeline");
  ascpipe::PipelineOptions options;
  std::string metric = "euclidean";
  std::string exclude_file;
  bool no_audit = false;
  bool robustness = false;
  run->add_option("--config", options.config_path, "Study config (key=value)")->required();
  run->add_option("--panel", options.panel_path, "Panel CSV")->required();
  run->add_option("--covariates", options.covariates_path, "Covariates CSV")->required();
  run->add_option("--price", options.price_path, "Optional price overlay CSV");
  run->add_option("--out", options.out_dir, "Output directory")->required();
  run->add_option("--stages", options.stages,
                  "Subset of match,estimate,infer,hetero (default: all)")
      ->delimiter(',');
  run->add_option("--k", options.k_override, "Override the donor count per treated unit");
  run->add_option("--metric", metric, "euclidean or mahalanobis")
      ->check(CLI::IsMember({"euclidean", "mahalanobis"}));
  run->add_flag("--no-audit", no_audit, "Disable the dry-donor audit");
  run->add_option("--exclude-file", exclude_file, "File with one donor id to exclude per line");
  run->add_option("--placebo-years", options.placebo_years, "Pseudo shock years")
      ->delimiter(',');
  run->add_flag("--robustness", robustness,
                "Run the k=1, k=10, and no-audit robustness variants");

  // plot
  auto* plot = app.add_subcommand("plot", "Emit figure-ready CSV data from a report");
  std::string report_path, figure_key, plot_out;
  plot->add_option("--report", report_path, "report.json from a pipeline run")->required();
  std::string figure_help = "One of:";
  for (const auto& k : ascpipe::plot_figure_keys()) figure_help += " " + k;
  plot->add_option("--figure", figure_key, figure_help)->required();
  plot->add_option("--out", plot_out, "Output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) return run_simulate(spec_path, seed, sim_out);
  if (plot->parsed()) return run_plot(report_path, figure_key, plot_out);

  options.metric = metric == "mahalanobis" ? ascpipe::MatchMetric::Mahalanobis
                                           : ascpipe::MatchMetric::Euclidean;
  options.audit.enabled = !no_audit;
  if (!exclude_file.empty()) {
    std::ifstream in(exclude_file);
    if (!in) {
      std::cerr << "error: cannot open exclude file '" << exclude_file << "'\n";
      return ascpipe::kValidationError;
    }
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) options.audit.exclude.insert(line);
    }
  }
  if (robustness) {
    const int base_k = options.k_override > 0 ? options.k_override : 5;
    options.robustness = {{"k1", 1, options.audit.enabled},
                          {"k10", 10, options.audit.enabled},
                          {"noaudit", base_k, false}};
  }
  return run_run(options);
}
