// Parallel kernels against their serial references.
//   egfn_bench --benchmark_filter=Forward

#include <benchmark/benchmark.h>

#include "egfn/evolution.hpp"
#include "egfn/losses.hpp"
#include "egfn/numnet.hpp"

using namespace egfn;

namespace {

const MlpSpec kSpec{32, {256, 256}, 9};

struct Net {
  ParamVector params{ParamLayout::for_spec(kSpec)};
  Matrix inputs;
  Net(std::size_t batch) : inputs(batch, kSpec.input_dim, 0.0) {
    Rng rng(1);
    xavier_init(params, rng);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t r = 0; r < batch; ++r) {
      for (double& x : inputs.row(r)) x = u(rng);
    }
  }
};

void BM_ForwardBatched(benchmark::State& st) {
  Net n(static_cast<std::size_t>(st.range(0)));
  const int workers = static_cast<int>(st.range(1));
  for (auto _ : st) benchmark::DoNotOptimize(mlp_forward_batch(kSpec, n.params, n.inputs, nullptr, workers));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_ForwardReference(benchmark::State& st) {
  Net n(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    for (std::size_t r = 0; r < n.inputs.rows; ++r) {
      const auto row = n.inputs.row(r);
      benchmark::DoNotOptimize(reference::mlp_forward(kSpec, n.params, std::vector<double>(row.begin(), row.end())));
    }
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_BackwardBatched(benchmark::State& st) {
  Net n(static_cast<std::size_t>(st.range(0)));
  const int workers = static_cast<int>(st.range(1));
  ForwardCache cache;
  const Matrix out = mlp_forward_batch(kSpec, n.params, n.inputs, &cache, workers);
  const Matrix upstream(out.rows, out.cols, 1.0);
  std::vector<double> grad(n.params.size());
  for (auto _ : st) {
    std::fill(grad.begin(), grad.end(), 0.0);
    mlp_backward_batch(kSpec, n.params, cache, upstream, grad, workers);
    benchmark::DoNotOptimize(grad.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_BackwardReference(benchmark::State& st) {
  Net n(static_cast<std::size_t>(st.range(0)));
  const std::vector<double> upstream(kSpec.output_dim, 1.0);
  for (auto _ : st) {
    for (std::size_t r = 0; r < n.inputs.rows; ++r) {
      const auto row = n.inputs.row(r);
      benchmark::DoNotOptimize(
          reference::mlp_backward(kSpec, n.params, std::vector<double>(row.begin(), row.end()), upstream));
    }
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

struct LossSetup {
  HypergridEnv env{{4, 8, 1e-3, .5, 2}};
  GfnAgent agent;
  std::vector<Trajectory> batch;
  explicit LossSetup(ObjectiveKind kind) {
    Rng rng(2);
    agent = make_agent(kind, env, {256, 256}, rng);
    batch = sample_trajectories(agent, env, 16, rng, 0.1);
  }
};

void BM_LossBatched(benchmark::State& st) {
  LossSetup s(static_cast<ObjectiveKind>(st.range(0)));
  const int workers = static_cast<int>(st.range(1));
  for (auto _ : st) benchmark::DoNotOptimize(objective_loss(s.agent, s.env, s.batch, workers));
}

void BM_LossReference(benchmark::State& st) {
  LossSetup s(static_cast<ObjectiveKind>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::objective_loss(s.agent, s.env, s.batch));
}

struct PopSetup {
  HypergridEnv env{{4, 8, 1e-3, .5, 2}};
  GfnAgent shape;
  Population pop;
  PopSetup() {
    Rng rng(3);
    shape = make_agent(ObjectiveKind::kTB, env, {256, 256}, rng);
    pop = make_population(shape, 5, 3);
  }
};

void BM_EvaluatePopulation(benchmark::State& st) {
  PopSetup s;
  const int workers = static_cast<int>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_population(s.shape, s.pop, s.env, 4, 9, workers));
}

void BM_EvaluatePopulationReference(benchmark::State& st) {
  PopSetup s;
  for (auto _ : st) benchmark::DoNotOptimize(reference::evaluate_population(s.shape, s.pop, s.env, 4, 9));
}

}  // namespace

BENCHMARK(BM_ForwardBatched)->ArgsProduct({{16, 256}, {1, 4}});
BENCHMARK(BM_ForwardReference)->Arg(16)->Arg(256);
BENCHMARK(BM_BackwardBatched)->ArgsProduct({{16, 256}, {1, 4}});
BENCHMARK(BM_BackwardReference)->Arg(16)->Arg(256);
// objective: 0 FM, 1 DB, 2 TB
BENCHMARK(BM_LossBatched)->ArgsProduct({{0, 1, 2}, {1, 4}});
BENCHMARK(BM_LossReference)->DenseRange(0, 2);
BENCHMARK(BM_EvaluatePopulation)->Arg(1)->Arg(4);
BENCHMARK(BM_EvaluatePopulationReference);

BENCHMARK_MAIN();
