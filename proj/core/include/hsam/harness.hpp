// Experiment orchestration: declarative configs, multi-seed runs over the six
// learning methods, hyperparameter sweeps, best-theta / best-val-loss model
// selection, and report emission (JSON, delimited table, SVG sensitivity
// plots).
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hsam/checkpoint.hpp"
#include "hsam/data.hpp"

namespace hsam {

enum class SelectionMode { best_theta_error, best_val_loss };

std::string selection_name(SelectionMode m);
SelectionMode selection_from_name(const std::string& s);

struct ModelConfig {
  std::vector<std::int64_t> hidden;  // MLP hidden dims, or conv hidden channels
  bool batchnorm = true;             // reactdiff conv net only
  PadMode conv_pad = PadMode::zero;
  int substeps = 1;  // training RK4 substeps per observation step
};

struct ExperimentConfig {
  TaskSpec task;
  ModelConfig model;
  std::vector<Method> methods{Method::erm, Method::sam};
  std::vector<double> rho_grid{0.01, 0.05, 0.1, 0.5};
  std::vector<double> lambda_p_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  std::vector<double> lambda_f_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  double fisher_damping = 1.0;
  OptimizerConfig opt;
  ThetaInit theta_init;
  std::int64_t seeds = 5;
  std::uint64_t seed_base = 0;
  std::uint64_t data_seed = 12345;
  SelectionMode selection = SelectionMode::best_theta_error;
  std::int64_t log_interval = 100;
  std::int64_t checkpoint_interval = 0;  // 0 = final checkpoint only
  std::string profile = "desk";

  // Named presets: "paper" follows the reference protocol (20000 iterations,
  // lr 1e-4, full grids, d=32); "desk" shrinks iterations/grids for
  // desk-scale runs and records every deviation.
  static ExperimentConfig preset(TaskKind task, const std::string& profile);

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_file(const std::filesystem::path& path);
  std::string to_json_text() const;
  std::string canonical_json() const;
  std::uint32_t config_hash() const;
  // Hash binding a specific cell (method, hyper, seed) for checkpoints.
  std::uint32_t cell_hash(Method method, double hyper, std::uint64_t seed) const;

  HybridModel build_model() const;
  std::vector<double> grid_for(Method m) const;  // deduplicated, erm -> {0}
  std::vector<std::string> deviations_from_reference() const;
  void validate() const;
};

struct CellResult {
  std::string method;
  double hyper = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string fail_reason;
  std::vector<double> theta_hat;
  double theta_rmse = 0.0;
  double val_y_rmse = 0.0;
  double test_y_rmse = 0.0;
  double final_train_loss = 0.0;
  std::string metrics_path;     // step-metrics JSONL, relative to the report dir
  double wall_seconds = 0.0;    // excluded from the canonical report bytes
};

struct SeedSelection {
  std::uint64_t seed = 0;
  bool failed = false;
  double hyper = 0.0;
  double theta_rmse = 0.0;
  double val_y_rmse = 0.0;
  double test_y_rmse = 0.0;
};

struct MethodSummary {
  std::string method;
  std::vector<SeedSelection> per_seed;
  int n_failed = 0;
  double theta_mean = 0.0, theta_sd = 0.0;
  double y_mean = 0.0, y_sd = 0.0;
};

struct RunReport {
  std::uint32_t format_version = 1;
  std::string config_json;  // resolved configuration, canonical text
  std::uint32_t config_hash = 0;
  std::string selection_mode;
  std::vector<std::string> deviations;
  std::vector<double> theta_truth;
  std::vector<CellResult> cells;
  std::vector<MethodSummary> summaries;

  const MethodSummary& summary(const std::string& method) const;
};

double theta_error(std::span<const double> estimate, std::span<const double> truth);

// Datasets for a config: loaded from dir if previously generated there,
// generated (and saved when dir is non-empty) otherwise.
DatasetTriple obtain_datasets(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct CellRequest {
  Method method = Method::erm;
  double hyper = 0.0;
  std::uint64_t seed = 0;                // seed index, combined with seed_base
  std::filesystem::path cell_dir;        // metrics + checkpoints; empty = no files
  std::optional<std::filesystem::path> resume_from;
};

CellResult train_cell(const ExperimentConfig& cfg, const DatasetTriple& data, const CellRequest& req);

// Trains every (method, hyperparameter, seed) cell on `jobs` workers and
// assembles the full report. Aborted cells are recorded as failed.
RunReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int jobs = 1);

struct SweepRow {
  std::string method;
  double hyper = 0.0;
  int n = 0;
  double theta_mean = 0.0, theta_sd = 0.0;
  double y_mean = 0.0, y_sd = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  bool has_erm_reference = false;
  double erm_theta_mean = 0.0;
  double erm_y_mean = 0.0;
};

// Per-grid-value aggregates across seeds (no model selection), plus the erm
// reference used as the dashed line in sensitivity plots.
SweepTable sweep_table(const RunReport& report);

void save_report(const RunReport& report, const std::filesystem::path& path);
RunReport load_report(const std::filesystem::path& path);

// Writes report.json, table.csv (Table-1-style layout with the per-task scale
// factors), sweep_<method>_{theta,y}.svg sensitivity plots, and timings.json.
// Deterministic: re-emitting the same report yields byte-identical files
// (timings.json aside).
void emit_report(const RunReport& report, const std::filesystem::path& dir);

}  // namespace hsam
