#include "hsam/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "hsam/rng.hpp"
#include "io_util.hpp"
#include "json_conv.hpp"
#include "plot.hpp"

namespace hsam {

using nlohmann::json;

std::string selection_name(SelectionMode m) {
  return m == SelectionMode::best_theta_error ? "best-theta-error" : "best-val-loss";
}

SelectionMode selection_from_name(const std::string& s) {
  if (s == "best-theta-error") return SelectionMode::best_theta_error;
  if (s == "best-val-loss") return SelectionMode::best_val_loss;
  throw std::invalid_argument("unknown selection mode '" + s + "'");
}

namespace {

std::string pad_name(PadMode p) { return p == PadMode::zero ? "zero" : "reflect"; }
PadMode pad_from_name(const std::string& s) {
  if (s == "zero") return PadMode::zero;
  if (s == "reflect") return PadMode::reflect;
  throw std::invalid_argument("unknown padding mode '" + s + "'");
}

json theta_init_to_json(const ThetaInit& ti) {
  json j;
  if (ti.policy == ThetaInit::Policy::fixed) {
    j["policy"] = "fixed";
    j["values"] = ti.values;
  } else {
    j["policy"] = "uniform";
    json ranges = json::array();
    for (const auto& [lo, hi] : ti.ranges) ranges.push_back({lo, hi});
    j["ranges"] = ranges;
  }
  return j;
}

ThetaInit theta_init_from_json(const json& j) {
  ThetaInit ti;
  const std::string policy = j.at("policy").get<std::string>();
  if (policy == "fixed") {
    ti.policy = ThetaInit::Policy::fixed;
    ti.values = j.at("values").get<std::vector<double>>();
  } else if (policy == "uniform") {
    ti.policy = ThetaInit::Policy::uniform;
    for (const auto& r : j.at("ranges")) ti.ranges.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
  } else {
    throw std::invalid_argument("unknown theta init policy '" + policy + "'");
  }
  return ti;
}

json config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(method_name(m));
  return json{{"task", detail::task_spec_to_json(c.task)},
              {"model",
               {{"hidden", c.model.hidden},
                {"batchnorm", c.model.batchnorm},
                {"conv_pad", pad_name(c.model.conv_pad)},
                {"substeps", c.model.substeps}}},
              {"methods", methods},
              {"rho_grid", c.rho_grid},
              {"lambda_p_grid", c.lambda_p_grid},
              {"lambda_f_grid", c.lambda_f_grid},
              {"fisher_damping", c.fisher_damping},
              {"opt",
               {{"base_lr", c.opt.base_lr},
                {"final_lr", c.opt.final_lr},
                {"total_iterations", c.opt.total_iterations},
                {"beta1", c.opt.beta1},
                {"beta2", c.opt.beta2},
                {"eps", c.opt.eps},
                {"minibatch", c.opt.minibatch}}},
              {"theta_init", theta_init_to_json(c.theta_init)},
              {"seeds", c.seeds},
              {"seed_base", c.seed_base},
              {"data_seed", c.data_seed},
              {"selection", selection_name(c.selection)},
              {"log_interval", c.log_interval},
              {"checkpoint_interval", c.checkpoint_interval},
              {"profile", c.profile}};
}

ExperimentConfig config_from_json(const json& j) {
  const TaskKind task = task_from_name(j.at("task").at("task").get<std::string>());
  const std::string profile = j.value("profile", std::string("desk"));
  ExperimentConfig c = ExperimentConfig::preset(task, profile);
  c.task = detail::task_spec_from_json(j.at("task"));
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (m.contains("hidden")) c.model.hidden = m.at("hidden").get<std::vector<std::int64_t>>();
    if (m.contains("batchnorm")) c.model.batchnorm = m.at("batchnorm").get<bool>();
    if (m.contains("conv_pad")) c.model.conv_pad = pad_from_name(m.at("conv_pad").get<std::string>());
    if (m.contains("substeps")) c.model.substeps = m.at("substeps").get<int>();
  }
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& name : j.at("methods")) c.methods.push_back(method_from_name(name.get<std::string>()));
  }
  if (j.contains("rho_grid")) c.rho_grid = j.at("rho_grid").get<std::vector<double>>();
  if (j.contains("lambda_p_grid")) c.lambda_p_grid = j.at("lambda_p_grid").get<std::vector<double>>();
  if (j.contains("lambda_f_grid")) c.lambda_f_grid = j.at("lambda_f_grid").get<std::vector<double>>();
  if (j.contains("fisher_damping")) c.fisher_damping = j.at("fisher_damping").get<double>();
  if (j.contains("opt")) {
    const json& o = j.at("opt");
    if (o.contains("base_lr")) c.opt.base_lr = o.at("base_lr").get<double>();
    if (o.contains("final_lr")) c.opt.final_lr = o.at("final_lr").get<double>();
    if (o.contains("total_iterations")) c.opt.total_iterations = o.at("total_iterations").get<std::int64_t>();
    if (o.contains("beta1")) c.opt.beta1 = o.at("beta1").get<double>();
    if (o.contains("beta2")) c.opt.beta2 = o.at("beta2").get<double>();
    if (o.contains("eps")) c.opt.eps = o.at("eps").get<double>();
    if (o.contains("minibatch")) c.opt.minibatch = o.at("minibatch").get<std::int64_t>();
  }
  if (j.contains("theta_init")) c.theta_init = theta_init_from_json(j.at("theta_init"));
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::int64_t>();
  if (j.contains("seed_base")) c.seed_base = j.at("seed_base").get<std::uint64_t>();
  if (j.contains("data_seed")) c.data_seed = j.at("data_seed").get<std::uint64_t>();
  if (j.contains("selection")) c.selection = selection_from_name(j.at("selection").get<std::string>());
  if (j.contains("log_interval")) c.log_interval = j.at("log_interval").get<std::int64_t>();
  if (j.contains("checkpoint_interval")) c.checkpoint_interval = j.at("checkpoint_interval").get<std::int64_t>();
  c.profile = profile;
  return c;
}

std::vector<double> dedup(std::vector<double> v) {
  std::vector<double> out;
  for (double x : v) {
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::preset(TaskKind task, const std::string& profile) {
  ExperimentConfig c;
  c.task = TaskSpec::defaults(task);
  c.profile = profile;
  c.opt.base_lr = 1e-4;
  c.opt.final_lr = 1e-6;
  c.opt.total_iterations = 20000;
  c.opt.minibatch = 0;  // full batch
  switch (task) {
    case TaskKind::pendulum:
    case TaskKind::duffing:
      c.model.hidden = {128, 128};
      c.theta_init = ThetaInit{ThetaInit::Policy::fixed, {0.5}, {}};
      break;
    case TaskKind::reactdiff:
      c.model.hidden = {16, 16};
      c.model.batchnorm = true;
      c.theta_init = ThetaInit{ThetaInit::Policy::fixed, {0.003, 0.003}, {}};
      break;
  }
  if (profile == "paper") {
    c.methods = {Method::erm, Method::l2reg, Method::freg_fnorm, Method::sam, Method::asam, Method::fsam};
    return c;
  }
  if (profile != "desk") {
    throw std::invalid_argument("unknown profile '" + profile + "' (expected desk or paper)");
  }
  // desk profile: same data recipes and model class, shorter schedule; every
  // deviation from the reference protocol is listed in the report header
  c.methods = {Method::erm, Method::sam};
  switch (task) {
    case TaskKind::pendulum:
    case TaskKind::duffing:
      c.opt.total_iterations = 4000;
      c.opt.base_lr = 5e-4;
      break;
    case TaskKind::reactdiff:
      c.task.grid_d = 16;
      c.model.hidden = {8, 8};
      c.opt.total_iterations = 2000;
      c.opt.base_lr = 5e-4;
      c.rho_grid = {0.05, 0.1};
      break;
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  return config_from_json(json::parse(text));
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return from_json_text(ss.str());
  } catch (const json::exception& e) {
    throw std::runtime_error("config '" + path.string() + "': " + e.what());
  }
}

std::string ExperimentConfig::to_json_text() const { return config_to_json(*this).dump(2) + "\n"; }

std::string ExperimentConfig::canonical_json() const { return config_to_json(*this).dump(); }

std::uint32_t ExperimentConfig::config_hash() const { return detail::crc_of(canonical_json()); }

std::uint32_t ExperimentConfig::cell_hash(Method method, double hyper, std::uint64_t seed) const {
  std::ostringstream ss;
  ss << canonical_json() << "|" << method_name(method) << "|" << hyper << "|" << seed;
  return detail::crc_of(ss.str());
}

HybridModel ExperimentConfig::build_model() const {
  HybridModel m;
  m.scientific.kind = task.task;
  if (task.task == TaskKind::reactdiff) {
    m.neural = ConvNetSpec{2, model.hidden, 2, 3, model.batchnorm, model.conv_pad};
    m.grid_d = task.grid_d;
    m.laplacian_bc = task.bc;
  } else {
    m.neural = MlpSpec{2, model.hidden, 1};
  }
  m.integration = IntegrationPlan{task.effective_dt(), task.m_y, model.substeps};
  return m;
}

std::vector<double> ExperimentConfig::grid_for(Method m) const {
  switch (m) {
    case Method::erm: return {0.0};
    case Method::l2reg: return dedup(lambda_p_grid);
    case Method::freg_fnorm:
    case Method::freg_reduction: return dedup(lambda_f_grid);
    default: return dedup(rho_grid);
  }
}

std::vector<std::string> ExperimentConfig::deviations_from_reference() const {
  ExperimentConfig ref = preset(task.task, "paper");
  std::vector<std::string> out;
  auto note = [&](const std::string& s) { out.push_back(s); };
  if (opt.total_iterations != ref.opt.total_iterations) {
    note("iterations " + std::to_string(opt.total_iterations) + " (reference " +
         std::to_string(ref.opt.total_iterations) + ")");
  }
  if (opt.base_lr != ref.opt.base_lr) {
    std::ostringstream ss;
    ss << "base_lr " << opt.base_lr << " (reference " << ref.opt.base_lr << ")";
    note(ss.str());
  }
  if (task.grid_d != ref.task.grid_d) {
    note("grid_d " + std::to_string(task.grid_d) + " (reference " + std::to_string(ref.task.grid_d) + ")");
  }
  if (model.hidden != ref.model.hidden) {
    std::string h = "hidden {";
    for (auto v : model.hidden) h += std::to_string(v) + ",";
    h += "} (reference {";
    for (auto v : ref.model.hidden) h += std::to_string(v) + ",";
    note(h + "})");
  }
  if (seeds != ref.seeds) note("seeds " + std::to_string(seeds) + " (reference " + std::to_string(ref.seeds) + ")");
  if (rho_grid != ref.rho_grid) {
    std::ostringstream ss;
    ss << "rho_grid {";
    for (auto v : rho_grid) ss << v << ",";
    ss << "} (reference {0.01,0.05,0.1,0.5})";
    note(ss.str());
  }
  note("training integrator: fixed-step RK4 at the observation step, " + std::to_string(model.substeps) +
       " substep(s) per observation (reference protocol does not state one)");
  return out;
}

void ExperimentConfig::validate() const {
  task.validate();
  opt.validate();
  if (methods.empty()) throw std::invalid_argument("config: methods list is empty");
  if (seeds < 1) throw std::invalid_argument("config: seeds must be at least 1");
  if (model.hidden.empty()) throw std::invalid_argument("config: hidden dims empty");
  if (model.substeps < 1) throw std::invalid_argument("config: substeps must be at least 1");
  for (Method m : methods) {
    if (grid_for(m).empty()) {
      throw std::invalid_argument("config: empty hyperparameter grid for method " + method_name(m));
    }
  }
  const auto want = static_cast<std::int64_t>(ScientificPart{task.task}.theta_params().size());
  if (theta_init.policy == ThetaInit::Policy::fixed &&
      static_cast<std::int64_t>(theta_init.values.size()) != want) {
    throw std::invalid_argument("config: theta_init values must have " + std::to_string(want) + " entries");
  }
  if (theta_init.policy == ThetaInit::Policy::uniform &&
      static_cast<std::int64_t>(theta_init.ranges.size()) != want) {
    throw std::invalid_argument("config: theta_init ranges must have " + std::to_string(want) + " entries");
  }
}

double theta_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) {
    throw std::invalid_argument("theta_error: dimension mismatch " + std::to_string(estimate.size()) + " vs " +
                                std::to_string(truth.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(estimate.size()));
}

DatasetTriple obtain_datasets(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const std::string base = task_name(cfg.task.task) + "_" + std::to_string(cfg.data_seed);
  if (!dir.empty()) {
    const fs::path train = dir / (base + "_train.hsdt");
    if (fs::exists(train)) {
      DatasetTriple t{load_dataset(train), load_dataset(dir / (base + "_val.hsdt")),
                      load_dataset(dir / (base + "_test.hsdt"))};
      const std::string want = detail::task_spec_to_json(cfg.task).dump();
      if (detail::task_spec_to_json(t.train.spec).dump() != want) {
        throw std::runtime_error("datasets in '" + dir.string() + "' were generated from a different task spec");
      }
      return t;
    }
  }
  DatasetTriple t = generate(cfg.task, cfg.data_seed);
  if (!dir.empty()) {
    fs::create_directories(dir);
    save_dataset(t.train, dir / (base + "_train.hsdt"));
    save_dataset(t.val, dir / (base + "_val.hsdt"));
    save_dataset(t.test, dir / (base + "_test.hsdt"));
  }
  return t;
}

namespace {

// RMSE over every entry of the split, model in eval mode.
double split_y_rmse(const HybridModel& model, ParamVector& pv, const Dataset& ds) {
  Batch b = make_batch(ds);
  Tape tape;
  ParamsView view = make_view(tape, pv);
  Var yhat = hybrid_predict(tape, model, view, tape.constant(b.x), /*training=*/false);
  const Tensor& pred = tape.value(yhat);
  if (!pred.same_shape(b.y)) throw std::logic_error("split_y_rmse: shape mismatch");
  double s = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - b.y[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.numel()));
}

std::string rng_state_string(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

void rng_state_restore(std::mt19937_64& rng, const std::string& s) {
  std::istringstream ss(s);
  ss >> rng;
  if (!ss) throw std::runtime_error("checkpoint: cannot restore sampler state");
}

// without-replacement minibatch draw via partial Fisher-Yates
std::vector<std::int64_t> draw_indices(std::mt19937_64& rng, std::int64_t n, std::int64_t k) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::int64_t> u(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(u(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

std::string hyper_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

CellResult train_cell(const ExperimentConfig& cfg, const DatasetTriple& data, const CellRequest& req) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();

  CellResult res;
  res.method = method_name(req.method);
  res.hyper = req.hyper;
  res.seed = req.seed;

  try {
    cfg.validate();
    const HybridModel model = cfg.build_model();

    TrainConfig tc;
    tc.method = req.method;
    tc.opt = cfg.opt;
    if (is_sam_family(req.method)) {
      tc.sam.variant = req.method;
      tc.sam.rho_phi = req.hyper;
      tc.sam.fisher_damping = cfg.fisher_damping;
    } else if (req.method != Method::erm) {
      tc.lambda = req.hyper;
    }

    const std::uint64_t init_seed = derive_seed(cfg.seed_base, req.seed);
    ParamVector pv = model.init(cfg.theta_init, init_seed);
    AdamState adam = AdamState::init(pv);
    std::mt19937_64 sampler(derive_seed(cfg.seed_base, req.seed, 0x5a));
    std::int64_t start_iteration = 0;

    const std::uint32_t hash = cfg.cell_hash(req.method, req.hyper, req.seed);
    if (req.resume_from) {
      TrainCheckpoint ck = load_checkpoint(*req.resume_from, hash);
      pv = std::move(ck.pv);
      adam = std::move(ck.adam);
      start_iteration = ck.iteration;
      if (!ck.rng_state.empty()) rng_state_restore(sampler, ck.rng_state);
    }

    std::ofstream metrics;
    if (!req.cell_dir.empty()) {
      fs::create_directories(req.cell_dir);
      metrics.open(req.cell_dir / "metrics.jsonl", start_iteration > 0 ? std::ios::app : std::ios::trunc);
      res.metrics_path = (req.cell_dir / "metrics.jsonl").string();
    }

    const Batch full = make_batch(data.train);
    const std::int64_t n_train = data.train.size();

    for (std::int64_t it = start_iteration; it < cfg.opt.total_iterations; ++it) {
      StepMetrics sm;
      if (cfg.opt.minibatch > 0 && cfg.opt.minibatch < n_train) {
        const auto idx = draw_indices(sampler, n_train, cfg.opt.minibatch);
        const Batch mb = make_batch(data.train, idx);
        sm = train_step(model, pv, mb, tc, adam, it);
      } else {
        sm = train_step(model, pv, full, tc, adam, it);
      }
      res.final_train_loss = sm.loss;

      const bool last = it + 1 == cfg.opt.total_iterations;
      if (metrics.is_open() && (it % cfg.log_interval == 0 || last)) {
        json line{{"iteration", it},
                  {"lr", sm.lr},
                  {"loss", sm.loss},
                  {"loss_perturbed", sm.loss_perturbed},
                  {"objective", sm.objective},
                  {"grad_theta_norm", sm.grad_theta_norm},
                  {"grad_phi_norm", sm.grad_phi_norm},
                  {"theta", pv.theta.vec()}};
        metrics << line.dump() << "\n";
      }
      if (!req.cell_dir.empty() && cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0 &&
          !last) {
        TrainCheckpoint ck{pv, adam, it + 1, hash, cfg.opt.minibatch > 0 ? rng_state_string(sampler) : ""};
        save_checkpoint(ck, req.cell_dir / ("ckpt_" + std::to_string(it + 1) + ".hsam"));
      }
    }

    if (!req.cell_dir.empty()) {
      TrainCheckpoint ck{pv, adam, cfg.opt.total_iterations, hash,
                         cfg.opt.minibatch > 0 ? rng_state_string(sampler) : ""};
      save_checkpoint(ck, req.cell_dir / "final.hsam");
    }

    res.theta_hat.assign(pv.theta.data(), pv.theta.data() + pv.theta.numel());
    const auto truth = cfg.task.theta_truth();
    res.theta_rmse = theta_error(res.theta_hat, truth);
    res.val_y_rmse = split_y_rmse(model, pv, data.val);
    res.test_y_rmse = split_y_rmse(model, pv, data.test);
  } catch (const std::exception& e) {
    res.failed = true;
    res.fail_reason = e.what();
  }

  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

namespace {

struct CellPlan {
  Method method;
  double hyper;
  std::uint64_t seed;
};

std::vector<CellPlan> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<CellPlan> cells;
  for (Method m : cfg.methods) {
    for (double h : cfg.grid_for(m)) {
      for (std::int64_t s = 0; s < cfg.seeds; ++s) {
        cells.push_back(CellPlan{m, h, static_cast<std::uint64_t>(s)});
      }
    }
  }
  return cells;
}

double sample_mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

std::vector<MethodSummary> summarize(const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
  std::vector<MethodSummary> out;
  for (Method m : cfg.methods) {
    MethodSummary ms;
    ms.method = method_name(m);
    for (std::int64_t s = 0; s < cfg.seeds; ++s) {
      const CellResult* best = nullptr;
      for (const auto& c : cells) {
        if (c.method != ms.method || c.seed != static_cast<std::uint64_t>(s) || c.failed) continue;
        if (!best) {
          best = &c;
          continue;
        }
        const double key = cfg.selection == SelectionMode::best_theta_error ? c.theta_rmse : c.val_y_rmse;
        const double best_key =
            cfg.selection == SelectionMode::best_theta_error ? best->theta_rmse : best->val_y_rmse;
        if (key < best_key) best = &c;
      }
      SeedSelection sel;
      sel.seed = static_cast<std::uint64_t>(s);
      if (!best) {
        sel.failed = true;
        ms.n_failed += 1;
      } else {
        sel.hyper = best->hyper;
        sel.theta_rmse = best->theta_rmse;
        sel.val_y_rmse = best->val_y_rmse;
        sel.test_y_rmse = best->test_y_rmse;
      }
      ms.per_seed.push_back(sel);
    }
    std::vector<double> th, yy;
    for (const auto& sel : ms.per_seed) {
      if (sel.failed) continue;
      th.push_back(sel.theta_rmse);
      yy.push_back(sel.test_y_rmse);
    }
    ms.theta_mean = sample_mean(th);
    ms.theta_sd = sample_sd(th, ms.theta_mean);
    ms.y_mean = sample_mean(yy);
    ms.y_sd = sample_sd(yy, ms.y_mean);
    out.push_back(std::move(ms));
  }
  return out;
}

}  // namespace

const MethodSummary& RunReport::summary(const std::string& method) const {
  for (const auto& s : summaries) {
    if (s.method == method) return s;
  }
  throw std::out_of_range("report: no summary for method '" + method + "'");
}

RunReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int jobs) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (!out_dir.empty()) fs::create_directories(out_dir);
  const DatasetTriple data = obtain_datasets(cfg, out_dir.empty() ? fs::path{} : out_dir / "data");

  const auto plans = enumerate_cells(cfg);
  std::vector<CellResult> cells(plans.size());
  std::atomic<std::size_t> next{0};
  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(plans.size())));

  auto work = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plans.size()) break;
      const CellPlan& p = plans[i];
      CellRequest req;
      req.method = p.method;
      req.hyper = p.hyper;
      req.seed = p.seed;
      const std::string cell_name =
          method_name(p.method) + "_" + hyper_str(p.hyper) + "_s" + std::to_string(p.seed);
      if (!out_dir.empty()) req.cell_dir = out_dir / "cells" / cell_name;
      cells[i] = train_cell(cfg, data, req);
      // paths in the report are relative to the report directory so repeated
      // runs in different directories stay byte-identical
      if (!req.cell_dir.empty()) cells[i].metrics_path = "cells/" + cell_name + "/metrics.jsonl";
    }
  };
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) workers.emplace_back(work);
    for (auto& t : workers) t.join();
  }

  RunReport report;
  report.config_json = cfg.canonical_json();
  report.config_hash = cfg.config_hash();
  report.selection_mode = selection_name(cfg.selection);
  report.deviations = cfg.deviations_from_reference();
  report.theta_truth = cfg.task.theta_truth();
  report.cells = std::move(cells);
  report.summaries = summarize(cfg, report.cells);
  return report;
}

SweepTable sweep_table(const RunReport& report) {
  SweepTable table;
  // group cells by (method, hyper), first-seen order
  std::vector<std::pair<std::string, double>> keys;
  for (const auto& c : report.cells) {
    const auto key = std::make_pair(c.method, c.hyper);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [method, hyper] : keys) {
    SweepRow row;
    row.method = method;
    row.hyper = hyper;
    std::vector<double> th, yy;
    for (const auto& c : report.cells) {
      if (c.method != method || c.hyper != hyper || c.failed) continue;
      th.push_back(c.theta_rmse);
      yy.push_back(c.test_y_rmse);
    }
    row.n = static_cast<int>(th.size());
    row.theta_mean = sample_mean(th);
    row.theta_sd = sample_sd(th, row.theta_mean);
    row.y_mean = sample_mean(yy);
    row.y_sd = sample_sd(yy, row.y_mean);
    table.rows.push_back(row);
  }
  for (const auto& row : table.rows) {
    if (row.method == "erm") {
      table.has_erm_reference = true;
      table.erm_theta_mean = row.theta_mean;
      table.erm_y_mean = row.y_mean;
      break;
    }
  }
  return table;
}

namespace {

json cell_to_json(const CellResult& c) {
  return json{{"method", c.method},
              {"hyper", c.hyper},
              {"seed", c.seed},
              {"failed", c.failed},
              {"fail_reason", c.fail_reason},
              {"theta_hat", c.theta_hat},
              {"theta_rmse", c.theta_rmse},
              {"val_y_rmse", c.val_y_rmse},
              {"test_y_rmse", c.test_y_rmse},
              {"final_train_loss", c.final_train_loss},
              {"metrics_path", c.metrics_path}};
}

CellResult cell_from_json(const json& j) {
  CellResult c;
  c.method = j.at("method").get<std::string>();
  c.hyper = j.at("hyper").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.failed = j.at("failed").get<bool>();
  c.fail_reason = j.at("fail_reason").get<std::string>();
  c.theta_hat = j.at("theta_hat").get<std::vector<double>>();
  c.theta_rmse = j.at("theta_rmse").get<double>();
  c.val_y_rmse = j.at("val_y_rmse").get<double>();
  c.test_y_rmse = j.at("test_y_rmse").get<double>();
  c.final_train_loss = j.at("final_train_loss").get<double>();
  c.metrics_path = j.at("metrics_path").get<std::string>();
  return c;
}

json summary_to_json(const MethodSummary& s) {
  json per_seed = json::array();
  for (const auto& sel : s.per_seed) {
    per_seed.push_back(json{{"seed", sel.seed},
                            {"failed", sel.failed},
                            {"hyper", sel.hyper},
                            {"theta_rmse", sel.theta_rmse},
                            {"val_y_rmse", sel.val_y_rmse},
                            {"test_y_rmse", sel.test_y_rmse}});
  }
  return json{{"method", s.method},         {"per_seed", per_seed}, {"n_failed", s.n_failed},
              {"theta_mean", s.theta_mean}, {"theta_sd", s.theta_sd}, {"y_mean", s.y_mean},
              {"y_sd", s.y_sd}};
}

MethodSummary summary_from_json(const json& j) {
  MethodSummary s;
  s.method = j.at("method").get<std::string>();
  for (const auto& p : j.at("per_seed")) {
    SeedSelection sel;
    sel.seed = p.at("seed").get<std::uint64_t>();
    sel.failed = p.at("failed").get<bool>();
    sel.hyper = p.at("hyper").get<double>();
    sel.theta_rmse = p.at("theta_rmse").get<double>();
    sel.val_y_rmse = p.at("val_y_rmse").get<double>();
    sel.test_y_rmse = p.at("test_y_rmse").get<double>();
    s.per_seed.push_back(sel);
  }
  s.n_failed = j.at("n_failed").get<int>();
  s.theta_mean = j.at("theta_mean").get<double>();
  s.theta_sd = j.at("theta_sd").get<double>();
  s.y_mean = j.at("y_mean").get<double>();
  s.y_sd = j.at("y_sd").get<double>();
  return s;
}

json report_to_json(const RunReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) cells.push_back(cell_to_json(c));
  json summaries = json::array();
  for (const auto& s : r.summaries) summaries.push_back(summary_to_json(s));
  return json{{"format_version", r.format_version},
              {"config", json::parse(r.config_json)},
              {"config_hash", r.config_hash},
              {"selection_mode", r.selection_mode},
              {"deviations", r.deviations},
              {"theta_truth", r.theta_truth},
              {"cells", cells},
              {"summaries", summaries}};
}

// per-task display scales mirroring the reference table layout
std::pair<double, double> table_scales(TaskKind task) {
  switch (task) {
    case TaskKind::pendulum: return {1e-3, 1e-2};
    case TaskKind::reactdiff: return {1e-4, 1.0};
    case TaskKind::duffing: return {1e-2, 1e-2};
  }
  return {1.0, 1.0};
}

std::string scale_str(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", s);
  return buf;
}

std::string cell_str(double mean, double sd, double scale) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g +- %.3g", mean / scale, sd / scale);
  return buf;
}

}  // namespace

void save_report(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << report_to_json(report).dump(2) << "\n";
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

RunReport load_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open report '" + path.string() + "'");
  json j = json::parse(f);
  RunReport r;
  r.format_version = j.at("format_version").get<std::uint32_t>();
  r.config_json = j.at("config").dump();
  r.config_hash = j.at("config_hash").get<std::uint32_t>();
  r.selection_mode = j.at("selection_mode").get<std::string>();
  r.deviations = j.at("deviations").get<std::vector<std::string>>();
  r.theta_truth = j.at("theta_truth").get<std::vector<double>>();
  for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
  for (const auto& s : j.at("summaries")) r.summaries.push_back(summary_from_json(s));
  return r;
}

void emit_report(const RunReport& report, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (report.cells.empty()) {
    throw std::invalid_argument("emit_report: empty report (config invariant: grids and seeds are non-empty)");
  }
  fs::create_directories(dir);
  save_report(report, dir / "report.json");

  const ExperimentConfig cfg = ExperimentConfig::from_json_text(report.config_json);
  const auto [theta_scale, y_scale] = table_scales(cfg.task.task);

  // delimited table mirroring the reference layout: one column per method
  {
    std::ofstream f(dir / "table.csv");
    if (!f) throw std::runtime_error("cannot open table.csv");
    f << "# task: " << task_name(cfg.task.task) << "\n";
    f << "# selection mode: " << report.selection_mode
      << " (best-theta-error follows the reference protocol and is against normal validation practice; "
         "best-val-loss is also available)\n";
    for (const auto& d : report.deviations) f << "# deviation: " << d << "\n";
    f << "metric";
    for (const auto& s : report.summaries) f << "," << s.method;
    f << "\n";
    f << "theta-error (x" << scale_str(theta_scale) << ")";
    for (const auto& s : report.summaries) f << "," << cell_str(s.theta_mean, s.theta_sd, theta_scale);
    f << "\n";
    f << "y-error (x" << scale_str(y_scale) << ")";
    for (const auto& s : report.summaries) f << "," << cell_str(s.y_mean, s.y_sd, y_scale);
    f << "\n";
    f << "failed-seeds";
    for (const auto& s : report.summaries) f << "," << s.n_failed;
    f << "\n";
  }

  // sensitivity plots per method with a non-trivial grid
  const SweepTable table = sweep_table(report);
  for (const auto& s : report.summaries) {
    if (s.method == "erm") continue;
    std::vector<detail::PlotPoint> th_points, y_points;
    for (const auto& row : table.rows) {
      if (row.method != s.method) continue;
      th_points.push_back({row.hyper, row.theta_mean, row.theta_sd});
      y_points.push_back({row.hyper, row.y_mean, row.y_sd});
    }
    if (th_points.size() < 2) continue;
    detail::PlotSpec ps;
    ps.title = task_name(cfg.task.task) + ": " + s.method + " theta-error vs hyperparameter";
    ps.x_label = s.method == "l2reg" ? "lambda_p" : (s.method.rfind("freg", 0) == 0 ? "lambda_f" : "rho_phi");
    ps.y_label = "theta-error";
    ps.points = th_points;
    if (table.has_erm_reference) {
      ps.reference = table.erm_theta_mean;
      ps.reference_label = "erm";
    }
    detail::write_sensitivity_svg(dir / ("sweep_" + s.method + "_theta.svg"), ps);

    ps.title = task_name(cfg.task.task) + ": " + s.method + " y-error vs hyperparameter";
    ps.y_label = "y-error";
    ps.points = y_points;
    if (table.has_erm_reference) ps.reference = table.erm_y_mean;
    detail::write_sensitivity_svg(dir / ("sweep_" + s.method + "_y.svg"), ps);
  }

  // wall times go to a sidecar so report.json stays bit-reproducible
  {
    json times = json::object();
    for (const auto& c : report.cells) {
      times[c.method + "_" + hyper_str(c.hyper) + "_s" + std::to_string(c.seed)] = c.wall_seconds;
    }
    std::ofstream f(dir / "timings.json");
    f << times.dump(2) << "\n";
  }
}

}  // namespace hsam
