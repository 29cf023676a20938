// Microbenchmarks for the training-critical kernels: matmul, conv2d forward
// and backward, batch norm, the stencil, taped MLP/conv field evaluations,
// and whole optimizer steps at benchmark shapes.
#include <benchmark/benchmark.h>

#include <random>

#include "hsam/harness.hpp"

using namespace hsam;

namespace {

Tensor randn(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = n(rng);
  return t;
}

ThetaInit fixed_theta(std::vector<double> v) { return ThetaInit{ThetaInit::Policy::fixed, std::move(v), {}}; }

void BM_matmul_128(benchmark::State& state) {
  Tensor a = randn({100, 128}, 1), b = randn({128, 128}, 2);
  for (auto _ : state) {
    Tensor c = ops::matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 100 * 128 * 128 * 2);
}
BENCHMARK(BM_matmul_128);

void BM_conv2d_forward(benchmark::State& state) {
  const std::int64_t ch = state.range(0);
  Tensor x = randn({100, ch, 16, 16}, 3), w = randn({ch, ch, 3, 3}, 4), bias = randn({ch}, 5);
  for (auto _ : state) {
    Tensor out = ops::conv2d(x, w, &bias, PadMode::zero);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 100 * 16 * 16 * ch * ch * 9 * 2);
}
BENCHMARK(BM_conv2d_forward)->Arg(8)->Arg(16);

void BM_conv2d_fwd_bwd_taped(benchmark::State& state) {
  const std::int64_t ch = state.range(0);
  Tensor x = randn({100, ch, 16, 16}, 3), w = randn({ch, ch, 3, 3}, 4), bias = randn({ch}, 5);
  for (auto _ : state) {
    Tape t;
    Var xv = t.leaf(x, "x");
    Var wv = t.leaf(w, "w");
    Var bv = t.leaf(bias, "b");
    Var out = t.conv2d(xv, wv, bv, PadMode::zero);
    Grad g = t.backward(t.squared_norm(out));
    benchmark::DoNotOptimize(g.at("w").data());
  }
  state.SetItemsProcessed(state.iterations() * 100 * 16 * 16 * ch * ch * 9 * 2 * 3);
}
BENCHMARK(BM_conv2d_fwd_bwd_taped)->Arg(8)->Arg(16);

void BM_batch_norm(benchmark::State& state) {
  Tensor x = randn({100, 8, 16, 16}, 6);
  Tensor gamma = Tensor::full({8}, 1.0), beta = Tensor({8});
  std::vector<double> rm(8, 0.0), rv(8, 1.0);
  for (auto _ : state) {
    Tape t;
    Var out = t.batch_norm(t.constant(x), t.constant(gamma), t.constant(beta), BatchNormStats{rm, rv}, true);
    benchmark::DoNotOptimize(t.value(out).data());
  }
}
BENCHMARK(BM_batch_norm);

void BM_laplacian(benchmark::State& state) {
  Tensor x = randn({100, 2, 16, 16}, 7);
  for (auto _ : state) {
    Tensor lap = ops::laplacian5(x, 0.125, Boundary::neumann);
    benchmark::DoNotOptimize(lap.data());
  }
}
BENCHMARK(BM_laplacian);

void BM_rk4_mlp_field(benchmark::State& state) {
  HybridModel m;
  m.scientific.kind = TaskKind::duffing;
  m.neural = MlpSpec{2, {128, 128}, 1};
  m.integration = IntegrationPlan{0.1, 10, 1};
  ParamVector pv = m.init(fixed_theta({0.5}), 0);
  Tensor x = randn({100, 2}, 8);
  for (auto _ : state) {
    Tape t;
    ParamsView view = make_view(t, pv);
    Var yhat = hybrid_predict(t, m, view, t.constant(x), true);
    benchmark::DoNotOptimize(t.value(yhat).data());
  }
}
BENCHMARK(BM_rk4_mlp_field);

void BM_reactdiff_predict(benchmark::State& state) {
  const bool with_backward = state.range(0) == 1;
  ExperimentConfig cfg = ExperimentConfig::preset(TaskKind::reactdiff, "desk");
  HybridModel m = cfg.build_model();
  ParamVector pv = m.init(cfg.theta_init, 0);
  Tensor x = randn({100, 2, 16, 16}, 9);
  Tensor y = randn({5, 100, 2, 16, 16}, 10);
  for (auto _ : state) {
    Tape t;
    ParamsView view = make_view(t, pv);
    Var yhat = hybrid_predict(t, m, view, t.constant(x), true);
    Var loss = t.scale(t.squared_norm(t.sub(yhat, t.constant(y))), 1.0 / 100.0);
    if (with_backward) {
      Grad g = t.backward(loss);
      benchmark::DoNotOptimize(g.at("phi").data());
    } else {
      benchmark::DoNotOptimize(t.value(loss).item());
    }
  }
}
BENCHMARK(BM_reactdiff_predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_train_step(benchmark::State& state) {
  const bool reactdiff = state.range(0) == 1;
  HybridModel m;
  ExperimentConfig cfg = ExperimentConfig::preset(reactdiff ? TaskKind::reactdiff : TaskKind::duffing, "desk");
  cfg.task.n_train = reactdiff ? 100 : 100;
  m = cfg.build_model();
  ParamVector pv = m.init(cfg.theta_init, 0);
  AdamState adam = AdamState::init(pv);
  DatasetTriple data = generate(cfg.task, 1);
  Batch full = make_batch(data.train);
  TrainConfig tc;
  tc.method = Method::sam;
  tc.sam.rho_phi = 0.05;
  tc.opt = cfg.opt;
  std::int64_t it = 0;
  for (auto _ : state) {
    StepMetrics sm = train_step(m, pv, full, tc, adam, it % cfg.opt.total_iterations);
    ++it;
    benchmark::DoNotOptimize(sm.loss);
  }
}
BENCHMARK(BM_train_step)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
