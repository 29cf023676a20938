#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hsam/harness.hpp"

using namespace hsam;
namespace fs = std::filesystem;

namespace {

// small, fast config for orchestration tests
ExperimentConfig smoke_config() {
  ExperimentConfig cfg = ExperimentConfig::preset(TaskKind::pendulum, "desk");
  cfg.task.n_train = 4;
  cfg.task.n_val = 3;
  cfg.task.n_test = 3;
  cfg.model.hidden = {8};
  cfg.methods = {Method::erm, Method::sam};
  cfg.rho_grid = {0.05, 0.1};
  cfg.opt.total_iterations = 30;
  cfg.opt.base_lr = 1e-3;
  cfg.seeds = 2;
  cfg.log_interval = 10;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("theta_error definition") {
  const double a[] = {1.0, 2.0};
  CHECK(theta_error(a, a) == 0.0);
  const double est[] = {0.7};
  const double tru[] = {2.0 / 3.0};
  CHECK(theta_error(est, tru) == doctest::Approx(0.7 - 2.0 / 3.0));
  const double e2[] = {0.004, 0.009};
  const double t2[] = {0.001, 0.005};
  CHECK(theta_error(e2, t2) == doctest::Approx(0.0035355339059327377).epsilon(1e-12));
  const double t3[] = {1.0};
  CHECK_THROWS(theta_error(e2, t3));
}

TEST_CASE("presets follow the reference protocol") {
  ExperimentConfig paper = ExperimentConfig::preset(TaskKind::pendulum, "paper");
  CHECK(paper.opt.total_iterations == 20000);
  CHECK(paper.opt.base_lr == 1e-4);
  CHECK(paper.opt.final_lr == 1e-6);
  CHECK(paper.opt.minibatch == 0);
  CHECK(paper.model.hidden == std::vector<std::int64_t>{128, 128});
  CHECK(paper.seeds == 5);
  CHECK(paper.methods.size() == 6);
  CHECK(paper.selection == SelectionMode::best_theta_error);
  CHECK(paper.rho_grid == std::vector<double>{0.01, 0.05, 0.1, 0.5});

  ExperimentConfig rd = ExperimentConfig::preset(TaskKind::reactdiff, "paper");
  CHECK(rd.task.grid_d == 32);
  CHECK(rd.model.hidden == std::vector<std::int64_t>{16, 16});
  CHECK(rd.model.batchnorm);

  ExperimentConfig desk = ExperimentConfig::preset(TaskKind::reactdiff, "desk");
  CHECK(desk.task.grid_d == 16);
  CHECK(!desk.deviations_from_reference().empty());

  CHECK_THROWS(ExperimentConfig::preset(TaskKind::pendulum, "galactic"));
}

TEST_CASE("config json round trip preserves the canonical form") {
  ExperimentConfig cfg = smoke_config();
  const std::string text = cfg.to_json_text();
  ExperimentConfig back = ExperimentConfig::from_json_text(text);
  CHECK(back.canonical_json() == cfg.canonical_json());
  CHECK(back.config_hash() == cfg.config_hash());

  // overriding a field changes the hash
  back.opt.base_lr *= 2.0;
  CHECK(back.config_hash() != cfg.config_hash());
}

TEST_CASE("grid_for deduplicates and validates") {
  ExperimentConfig cfg = smoke_config();
  cfg.rho_grid = {0.1, 0.1, 0.05, 0.1};
  CHECK(cfg.grid_for(Method::sam) == std::vector<double>{0.1, 0.05});
  CHECK(cfg.grid_for(Method::erm) == std::vector<double>{0.0});

  cfg.rho_grid = {};
  CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("grid"));

  ExperimentConfig bad = smoke_config();
  bad.seeds = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("run_experiment fills every cell and is deterministic") {
  ExperimentConfig cfg = smoke_config();
  RunReport a = run_experiment(cfg, "", 2);
  // |erm grid| * seeds + |sam grid| * seeds
  CHECK(a.cells.size() == 1 * 2 + 2 * 2);
  for (const auto& c : a.cells) {
    CHECK(!c.failed);
    CHECK(std::isfinite(c.theta_rmse));
    CHECK(std::isfinite(c.val_y_rmse));
    CHECK(std::isfinite(c.test_y_rmse));
  }
  RunReport b = run_experiment(cfg, "", 1);  // different worker count, same numbers
  REQUIRE(a.cells.size() == b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    CHECK(std::memcmp(&a.cells[i].theta_rmse, &b.cells[i].theta_rmse, sizeof(double)) == 0);
    CHECK(std::memcmp(&a.cells[i].test_y_rmse, &b.cells[i].test_y_rmse, sizeof(double)) == 0);
  }
}

TEST_CASE("single-cell smoke run has exactly one finite record") {
  ExperimentConfig cfg = smoke_config();
  cfg.methods = {Method::erm};
  cfg.seeds = 1;
  cfg.opt.total_iterations = 20;
  RunReport r = run_experiment(cfg, "", 1);
  REQUIRE(r.cells.size() == 1);
  CHECK(!r.cells[0].failed);
  CHECK(std::isfinite(r.cells[0].theta_rmse));
  CHECK(std::isfinite(r.cells[0].final_train_loss));
  REQUIRE(r.summaries.size() == 1);
  CHECK(r.summaries[0].per_seed.size() == 1);
}

TEST_CASE("selection modes implement the documented argmin") {
  ExperimentConfig cfg = smoke_config();
  RunReport r = run_experiment(cfg, "", 2);
  // best-theta-error: exhaustive scan over the sam cells per seed
  for (std::int64_t s = 0; s < cfg.seeds; ++s) {
    double best = 1e300;
    for (const auto& c : r.cells) {
      if (c.method == "sam" && c.seed == static_cast<std::uint64_t>(s)) best = std::min(best, c.theta_rmse);
    }
    const auto& sel = r.summary("sam").per_seed[static_cast<std::size_t>(s)];
    CHECK(sel.theta_rmse == best);
  }

  ExperimentConfig cfg2 = smoke_config();
  cfg2.selection = SelectionMode::best_val_loss;
  RunReport r2 = run_experiment(cfg2, "", 2);
  CHECK(r2.selection_mode == "best-val-loss");
  for (std::int64_t s = 0; s < cfg2.seeds; ++s) {
    double best = 1e300;
    double best_theta = 0.0;
    for (const auto& c : r2.cells) {
      if (c.method == "sam" && c.seed == static_cast<std::uint64_t>(s) && c.val_y_rmse < best) {
        best = c.val_y_rmse;
        best_theta = c.theta_rmse;
      }
    }
    const auto& sel = r2.summary("sam").per_seed[static_cast<std::size_t>(s)];
    CHECK(sel.val_y_rmse == best);
    CHECK(sel.theta_rmse == best_theta);
  }
}

TEST_CASE("aggregates recompute from per-seed records") {
  ExperimentConfig cfg = smoke_config();
  RunReport r = run_experiment(cfg, "", 2);
  for (const auto& s : r.summaries) {
    double mean = 0.0;
    int n = 0;
    for (const auto& sel : s.per_seed) {
      if (!sel.failed) {
        mean += sel.theta_rmse;
        ++n;
      }
    }
    mean /= n;
    CHECK(s.theta_mean == doctest::Approx(mean).epsilon(1e-15));
    double sd = 0.0;
    for (const auto& sel : s.per_seed) {
      if (!sel.failed) sd += (sel.theta_rmse - mean) * (sel.theta_rmse - mean);
    }
    sd = n > 1 ? std::sqrt(sd / (n - 1)) : 0.0;
    CHECK(s.theta_sd == doctest::Approx(sd).epsilon(1e-12));
  }
}

TEST_CASE("sweep table cardinality and erm reference consistency") {
  ExperimentConfig cfg = smoke_config();
  RunReport r = run_experiment(cfg, "", 2);
  SweepTable t = sweep_table(r);
  // one row per (method, grid value): erm has the trivial grid {0}
  CHECK(t.rows.size() == 1 + 2);
  CHECK(t.has_erm_reference);

  // the erm reference equals a direct erm-only run with the same seeds
  ExperimentConfig erm_only = cfg;
  erm_only.methods = {Method::erm};
  RunReport r2 = run_experiment(erm_only, "", 1);
  SweepTable t2 = sweep_table(r2);
  CHECK(t.erm_theta_mean == t2.rows[0].theta_mean);
  CHECK(t.erm_y_mean == t2.rows[0].y_mean);

  // a grid of one value repeated collapses to a single row
  ExperimentConfig rep = cfg;
  rep.methods = {Method::sam};
  rep.rho_grid = {0.1, 0.1};
  RunReport r3 = run_experiment(rep, "", 1);
  CHECK(sweep_table(r3).rows.size() == 1);
}

TEST_CASE("failed cells are recorded, not dropped") {
  ExperimentConfig cfg = smoke_config();
  cfg.methods = {Method::erm};
  cfg.seeds = 1;
  cfg.theta_init.values = {1e200};  // guaranteed non-finite loss
  RunReport r = run_experiment(cfg, "", 1);
  REQUIRE(r.cells.size() == 1);
  CHECK(r.cells[0].failed);
  CHECK(r.cells[0].fail_reason.find("non-finite") != std::string::npos);
  CHECK(r.summaries[0].n_failed == 1);
}

TEST_CASE("report save/load/emit round trip is byte-stable") {
  TmpDir tmp("hsam_report_test");
  ExperimentConfig cfg = smoke_config();
  RunReport r = run_experiment(cfg, "", 2);
  emit_report(r, tmp.path / "a");
  RunReport loaded = load_report(tmp.path / "a" / "report.json");
  emit_report(loaded, tmp.path / "b");
  CHECK(slurp(tmp.path / "a" / "report.json") == slurp(tmp.path / "b" / "report.json"));
  CHECK(slurp(tmp.path / "a" / "table.csv") == slurp(tmp.path / "b" / "table.csv"));
  CHECK(slurp(tmp.path / "a" / "sweep_sam_theta.svg") == slurp(tmp.path / "b" / "sweep_sam_theta.svg"));

  // table carries the selection mode and the scale factors
  const std::string table = slurp(tmp.path / "a" / "table.csv");
  CHECK(table.find("selection mode: best-theta-error") != std::string::npos);
  CHECK(table.find("theta-error (x0.001)") != std::string::npos);
  CHECK(table.find("y-error (x0.01)") != std::string::npos);

  // the sensitivity plot carries the dashed erm reference
  const std::string svg = slurp(tmp.path / "a" / "sweep_sam_theta.svg");
  CHECK(svg.find("stroke-dasharray") != std::string::npos);

  RunReport empty;
  CHECK_THROWS_WITH(emit_report(empty, tmp.path / "c"), doctest::Contains("invariant"));
}

TEST_CASE("full determinism of repeated runs with output directories") {
  TmpDir tmp("hsam_determinism_test");
  ExperimentConfig cfg = smoke_config();
  RunReport a = run_experiment(cfg, tmp.path / "r1", 2);
  RunReport b = run_experiment(cfg, tmp.path / "r2", 2);
  emit_report(a, tmp.path / "r1");
  emit_report(b, tmp.path / "r2");
  CHECK(slurp(tmp.path / "r1" / "report.json") == slurp(tmp.path / "r2" / "report.json"));
  // dataset files are byte-identical as well
  CHECK(slurp(tmp.path / "r1" / "data" / "pendulum_12345_train.hsdt") ==
        slurp(tmp.path / "r2" / "data" / "pendulum_12345_train.hsdt"));
}

TEST_CASE("obtain_datasets reuses persisted files and validates the spec") {
  TmpDir tmp("hsam_datasets_test");
  ExperimentConfig cfg = smoke_config();
  DatasetTriple a = obtain_datasets(cfg, tmp.path);
  CHECK(fs::exists(tmp.path / "pendulum_12345_train.hsdt"));
  DatasetTriple b = obtain_datasets(cfg, tmp.path);  // loads this time
  CHECK(std::memcmp(a.train.y.data(), b.train.y.data(),
                    static_cast<std::size_t>(a.train.y.numel()) * sizeof(double)) == 0);
  ExperimentConfig other = cfg;
  other.task.noise_std = 0.5;
  CHECK_THROWS_WITH((void)obtain_datasets(other, tmp.path), doctest::Contains("different task spec"));
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run bit-exactly") {
  TmpDir tmp("hsam_resume_test");
  ExperimentConfig cfg = smoke_config();
  cfg.methods = {Method::sam};
  cfg.rho_grid = {0.05};
  cfg.seeds = 1;
  cfg.opt.total_iterations = 40;
  cfg.checkpoint_interval = 20;
  const DatasetTriple data = obtain_datasets(cfg, tmp.path / "data");

  CellRequest full;
  full.method = Method::sam;
  full.hyper = 0.05;
  full.seed = 0;
  full.cell_dir = tmp.path / "full";
  CellResult uninterrupted = train_cell(cfg, data, full);
  REQUIRE(!uninterrupted.failed);
  REQUIRE(fs::exists(tmp.path / "full" / "ckpt_20.hsam"));

  CellRequest resumed = full;
  resumed.cell_dir = tmp.path / "resumed";
  resumed.resume_from = tmp.path / "full" / "ckpt_20.hsam";
  CellResult from_middle = train_cell(cfg, data, resumed);
  REQUIRE(!from_middle.failed);
  REQUIRE(from_middle.theta_hat.size() == uninterrupted.theta_hat.size());
  CHECK(std::memcmp(from_middle.theta_hat.data(), uninterrupted.theta_hat.data(),
                    from_middle.theta_hat.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(&from_middle.test_y_rmse, &uninterrupted.test_y_rmse, sizeof(double)) == 0);

  // resuming under an altered config is rejected by the hash guard
  ExperimentConfig altered = cfg;
  altered.opt.base_lr *= 2.0;
  CellResult rejected = train_cell(altered, data, resumed);
  CHECK(rejected.failed);
  CHECK(rejected.fail_reason.find("hash") != std::string::npos);

  // corrupt checkpoint trips the checksum
  {
    std::fstream f(tmp.path / "full" / "ckpt_20.hsam", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(32);
    char b;
    f.read(&b, 1);
    b ^= 0x10;
    f.seekp(32);
    f.write(&b, 1);
  }
  CellResult corrupt = train_cell(cfg, data, resumed);
  CHECK(corrupt.failed);
  CHECK(corrupt.fail_reason.find("checksum") != std::string::npos);
}

TEST_CASE("minibatch sampler state survives checkpointing") {
  TmpDir tmp("hsam_minibatch_test");
  ExperimentConfig cfg = smoke_config();
  cfg.methods = {Method::erm};
  cfg.seeds = 1;
  cfg.opt.total_iterations = 30;
  cfg.opt.minibatch = 2;
  cfg.checkpoint_interval = 15;
  const DatasetTriple data = obtain_datasets(cfg, tmp.path / "data");

  CellRequest full;
  full.method = Method::erm;
  full.seed = 0;
  full.cell_dir = tmp.path / "full";
  CellResult uninterrupted = train_cell(cfg, data, full);
  REQUIRE(!uninterrupted.failed);

  CellRequest resumed = full;
  resumed.cell_dir = tmp.path / "resumed";
  resumed.resume_from = tmp.path / "full" / "ckpt_15.hsam";
  CellResult from_middle = train_cell(cfg, data, resumed);
  REQUIRE(!from_middle.failed);
  CHECK(std::memcmp(from_middle.theta_hat.data(), uninterrupted.theta_hat.data(), sizeof(double)) == 0);
  CHECK(std::memcmp(&from_middle.final_train_loss, &uninterrupted.final_train_loss, sizeof(double)) == 0);
}

TEST_CASE("parameter file round trip preserves layout and batch-norm state") {
  TmpDir tmp("hsam_params_test");
  ExperimentConfig cfg = ExperimentConfig::preset(TaskKind::reactdiff, "desk");
  cfg.task.grid_d = 8;
  cfg.model.hidden = {4};
  HybridModel model = cfg.build_model();
  ParamVector pv = model.init(cfg.theta_init, 3);
  for (std::int64_t i = 0; i < pv.state.numel(); ++i) pv.state[i] = 0.25 * static_cast<double>(i);
  save_params(pv, tmp.path / "p.hsam");
  ParamVector back = load_params(tmp.path / "p.hsam");
  CHECK(back.layout == pv.layout);
  CHECK(std::memcmp(back.theta.data(), pv.theta.data(), static_cast<std::size_t>(pv.theta.numel()) * sizeof(double)) == 0);
  CHECK(std::memcmp(back.phi.data(), pv.phi.data(), static_cast<std::size_t>(pv.phi.numel()) * sizeof(double)) == 0);
  CHECK(std::memcmp(back.state.data(), pv.state.data(), static_cast<std::size_t>(pv.state.numel()) * sizeof(double)) == 0);
}
