#include "isoimm/geometry.hpp"
#include "isoimm/training.hpp"

#include <benchmark/benchmark.h>

using namespace isoimm;

namespace {

PointCloud roll(std::size_t n) { return normalize(gen_swiss_roll(n, 1)).first; }

void BM_MlpForward(benchmark::State& state) {
  MlpParams p = init_mlp({{2, 64, 64, 3}, ActivationKind::Tanh}, 1);
  Matrix z = Matrix::Random(state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_forward(p, z));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(256)->Arg(1000);

void BM_TapeForwardBackward(benchmark::State& state) {
  MlpParams p = init_mlp({{2, 64, 64, 3}, ActivationKind::Tanh}, 1);
  Matrix z = Matrix::Random(state.range(0), 2);
  for (auto _ : state) {
    Tape t;
    MlpNodes net = place_mlp(t, p, true);
    NodeId out = t.mean(t.square(mlp_forward_node(t, net, t.constant(Tensor::from(z)))));
    t.forward();
    benchmark::DoNotOptimize(t.backward(out));
  }
}
BENCHMARK(BM_TapeForwardBackward)->Arg(256)->Arg(1000);

void BM_JacobianColumns(benchmark::State& state) {
  MlpParams p = init_mlp({{2, 64, 64, 3}, ActivationKind::Tanh}, 1);
  Matrix z = Matrix::Random(state.range(0), 2);
  for (auto _ : state) {
    Tape t;
    MlpNodes net = place_mlp(t, p, true);
    auto cols = mlp_jacobian_columns_node(t, net, t.constant(Tensor::from(z)), static_cast<std::size_t>(z.rows()));
    NodeId out = t.add(t.sum(t.square(cols[0])), t.sum(t.square(cols[1])));
    t.forward();
    benchmark::DoNotOptimize(t.backward(out));
  }
}
BENCHMARK(BM_JacobianColumns)->Arg(256)->Arg(1000);

void BM_KnnNeighborhoods(benchmark::State& state) {
  Matrix codes = Matrix::Random(state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(knn_neighborhoods(codes, 8));
}
BENCHMARK(BM_KnnNeighborhoods)->Arg(256)->Arg(1000);

void BM_OuterIteration(benchmark::State& state) {
  PointCloud cloud = roll(static_cast<std::size_t>(state.range(0)));
  TrainConfig cfg;
  TrainState s = init_state(3, cfg);
  Rng batch_rng(1, "batch"), sampler_rng(1, "sampler");
  for (auto _ : state) {
    StepBatch b = prepare_batch(s, cloud, sample_batch(cloud.size(), cfg.effective_batch(cloud.size()), batch_rng), cfg,
                                sampler_rng);
    e_step(s, b, cfg);
    m_step(s, b, cfg);
  }
}
BENCHMARK(BM_OuterIteration)->Arg(256)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
