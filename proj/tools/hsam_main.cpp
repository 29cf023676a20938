// hsam command-line interface: dataset generation, single training cells,
// full benchmark runs, hyperparameter sweeps, report re-emission, and
// checkpoint resume.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "hsam/harness.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace hsam;

namespace {

constexpr const char* kOutRootEnv = "HSAM_OUT_ROOT";

struct CommonArgs {
  std::string config_path;
  std::string task;
  std::string profile = "desk";
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_jobs) {
  cmd->add_option("--config", a.config_path, "experiment config file (JSON)");
  cmd->add_option("--task", a.task, "task preset: pendulum | duffing | reactdiff (used when no --config)");
  cmd->add_option("--profile", a.profile, "config preset profile: desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--out", a.out, "output directory (default: $" + std::string(kOutRootEnv) + "/<command>)");
  cmd->add_option("--seed", a.seed, "seed override (data seed for gen, seed base otherwise)")
      ->each([&a](const std::string&) { a.seed_given = true; });
  if (with_jobs) cmd->add_option("--jobs", a.jobs, "worker threads for independent cells")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve_config(const CommonArgs& a) {
  ExperimentConfig cfg;
  if (!a.config_path.empty()) {
    cfg = ExperimentConfig::from_file(a.config_path);
  } else if (!a.task.empty()) {
    cfg = ExperimentConfig::preset(task_from_name(a.task), a.profile);
  } else {
    throw std::invalid_argument("either --config or --task is required");
  }
  return cfg;
}

fs::path resolve_out(const CommonArgs& a, const std::string& command) {
  if (!a.out.empty()) return a.out;
  if (const char* root = std::getenv(kOutRootEnv)) return fs::path(root) / command;
  return fs::path("out") / command;
}

void print_summaries(const RunReport& report) {
  std::cout << "selection mode: " << report.selection_mode << "\n";
  for (const auto& d : report.deviations) std::cout << "deviation: " << d << "\n";
  for (const auto& s : report.summaries) {
    std::cout << s.method << ": theta-RMSE " << s.theta_mean << " +- " << s.theta_sd << ", test y-RMSE "
              << s.y_mean << " +- " << s.y_sd;
    if (s.n_failed > 0) std::cout << "  [" << s.n_failed << " failed seed(s)]";
    std::cout << "\n";
  }
}

int cmd_gen(const CommonArgs& a) {
  ExperimentConfig cfg = resolve_config(a);
  if (a.seed_given) cfg.data_seed = a.seed;
  const fs::path dir = resolve_out(a, "gen");
  fs::create_directories(dir);
  obtain_datasets(cfg, dir);
  std::cout << "datasets for " << task_name(cfg.task.task) << " (data seed " << cfg.data_seed << ") in " << dir
            << "\n";
  return 0;
}

int cmd_train(const CommonArgs& a, const std::string& method, double hyper, const std::string& resume_path) {
  ExperimentConfig cfg = resolve_config(a);
  const fs::path dir = resolve_out(a, "train");
  const DatasetTriple data = obtain_datasets(cfg, dir / "data");

  CellRequest req;
  req.method = method_from_name(method);
  req.hyper = hyper;
  req.seed = a.seed_given ? a.seed : 0;
  req.cell_dir = dir / (method + "_" + std::to_string(req.seed));
  if (!resume_path.empty()) req.resume_from = fs::path(resume_path);

  const CellResult res = train_cell(cfg, data, req);
  nlohmann::json j{{"method", res.method},       {"hyper", res.hyper},
                   {"seed", res.seed},           {"failed", res.failed},
                   {"fail_reason", res.fail_reason}, {"theta_hat", res.theta_hat},
                   {"theta_rmse", res.theta_rmse},   {"val_y_rmse", res.val_y_rmse},
                   {"test_y_rmse", res.test_y_rmse}, {"final_train_loss", res.final_train_loss}};
  std::ofstream f(req.cell_dir / "result.json");
  f << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  if (res.failed) {
    std::cerr << "run failed: " << res.fail_reason << "\n";
    return 2;
  }
  return 0;
}

int cmd_bench(const CommonArgs& a) {
  ExperimentConfig cfg = resolve_config(a);
  if (a.seed_given) cfg.seed_base = a.seed;
  const fs::path dir = resolve_out(a, "bench");
  const RunReport report = run_experiment(cfg, dir, a.jobs);
  emit_report(report, dir);
  print_summaries(report);
  std::cout << "report: " << (dir / "report.json") << "\n";
  for (const auto& c : report.cells) {
    if (c.failed) {
      std::cerr << "failed cell " << c.method << " hyper=" << c.hyper << " seed=" << c.seed << ": "
                << c.fail_reason << "\n";
    }
  }
  const bool any_failed =
      std::any_of(report.cells.begin(), report.cells.end(), [](const CellResult& c) { return c.failed; });
  return any_failed ? 2 : 0;
}

int cmd_sweep(const CommonArgs& a, const std::string& method) {
  ExperimentConfig cfg = resolve_config(a);
  if (a.seed_given) cfg.seed_base = a.seed;
  const Method m = method_from_name(method);
  if (m == Method::erm) throw std::invalid_argument("sweep: pick a method with a hyperparameter grid");
  cfg.methods = {Method::erm, m};  // erm supplies the dashed reference line
  if (cfg.grid_for(m).size() < 2) {
    throw std::invalid_argument("sweep: the grid for " + method + " needs at least 2 points");
  }
  const fs::path dir = resolve_out(a, "sweep");
  const RunReport report = run_experiment(cfg, dir, a.jobs);
  emit_report(report, dir);

  const SweepTable table = sweep_table(report);
  std::ofstream f(dir / "sweep.csv");
  f << "method,hyper,n,theta_mean,theta_sd,y_mean,y_sd\n";
  for (const auto& row : table.rows) {
    f << row.method << "," << row.hyper << "," << row.n << "," << row.theta_mean << "," << row.theta_sd << ","
      << row.y_mean << "," << row.y_sd << "\n";
  }
  print_summaries(report);
  std::cout << "sensitivity plots: " << (dir / ("sweep_" + method + "_theta.svg")) << "\n";
  return 0;
}

int cmd_report(const std::string& in, const std::string& out) {
  const RunReport report = load_report(in);
  emit_report(report, out);
  print_summaries(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // one BLAS thread per worker; cells parallelize across --jobs instead
  setenv("OPENBLAS_NUM_THREADS", "1", 0);

  CLI::App app{"hybrid-model learning with phi-direction sharpness-aware minimization"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, bench_args, sweep_args;
  std::string train_method = "erm", sweep_method = "sam";
  double train_hyper = 0.0;
  std::string resume_path, report_in, report_out;

  CLI::App* gen = app.add_subcommand("gen", "generate and persist the train/val/test datasets");
  add_common(gen, gen_args, false);

  CLI::App* train = app.add_subcommand("train", "train a single (method, hyperparameter, seed) cell");
  add_common(train, train_args, false);
  train->add_option("--method", train_method, "erm | l2reg | freg | freg-reduction | sam | asam | fsam");
  train->add_option("--hyper", train_hyper, "lambda or rho for the chosen method");

  CLI::App* bench = app.add_subcommand("bench", "run the full benchmark grid and emit the report");
  add_common(bench, bench_args, true);

  CLI::App* sweep = app.add_subcommand("sweep", "hyperparameter sensitivity sweep with an erm reference");
  add_common(sweep, sweep_args, true);
  sweep->add_option("--method", sweep_method, "method whose grid is swept");

  CLI::App* report = app.add_subcommand("report", "re-emit table and plots from a stored report");
  report->add_option("--in", report_in, "report.json produced by bench/sweep")->required();
  report->add_option("--out", report_out, "output directory")->required();

  CLI::App* resume = app.add_subcommand("resume", "continue a training cell from a checkpoint");
  add_common(resume, train_args, false);
  resume->add_option("--method", train_method, "method of the checkpointed cell");
  resume->add_option("--hyper", train_hyper, "hyperparameter of the checkpointed cell");
  resume->add_option("--checkpoint", resume_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_args);
    if (train->parsed()) return cmd_train(train_args, train_method, train_hyper, "");
    if (bench->parsed()) return cmd_bench(bench_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_method);
    if (report->parsed()) return cmd_report(report_in, report_out);
    if (resume->parsed()) return cmd_train(train_args, train_method, train_hyper, resume_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "run failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
