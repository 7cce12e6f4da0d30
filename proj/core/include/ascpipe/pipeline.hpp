#pragma once

#include <string>
#include <vector>

#include "ascpipe/inference.hpp"
#include "ascpipe/matcher.hpp"
#include "ascpipe/panel.hpp"

namespace ascpipe {

// Exit codes used by the CLI.
enum ExitCode { kOk = 0, kValidationError = 2, kStageFailure = 3 };

// Thrown by run_pipeline when a stage fails after validation succeeded.
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string stage_name, const std::string& what)
      : std::runtime_error("stage '" + stage_name + "' failed: " + what),
        stage(std::move(stage_name)) {}
};

struct PipelineOptions {
  std::string config_path;
  std::string panel_path;
  std::string covariates_path;
  std::string price_path;  // optional overlay series: year,price_usd_per_kg
  std::string out_dir;
  // Subset of {"match", "estimate", "infer", "hetero"}; empty runs everything.
  std::vector<std::string> stages;
  std::vector<int> placebo_years;               // empty: skip placebos
  std::vector<RobustnessVariant> robustness;    // empty: skip robustness
  AuditRule audit;
  MatchMetric metric = MatchMetric::Euclidean;
  int k_override = 0;  // > 0 replaces the configured donor count
};

struct RunReport {
  std::string report_path;               // report.json
  std::vector<std::string> files;        // every artifact written, sorted
  std::string json_text;                 // serialized report
};

// Executes ingest -> match -> estimate -> infer -> hetero and writes all CSV
// artifacts plus report.json into out_dir. Partial outputs are removed when a
// stage fails.
RunReport run_pipeline(const PipelineOptions& options);

// Writes panel.csv, covariates.csv, and truth.csv for a simulated panel.
std::vector<std::string> simulate_command(const std::string& spec_path, std::uint64_t seed,
                                          const std::string& out_dir);

// Figure-ready long-format CSV for one figure key. Valid keys:
// pooled, perunit, balance, outcome_overlay, tree, pca, weights, placebo.
void emit_plot_data(const std::string& report_path, const std::string& figure_key,
                    const std::string& out_path);
const std::vector<std::string>& plot_figure_keys();

}  // namespace ascpipe
