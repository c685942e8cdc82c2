#include <benchmark/benchmark.h>

#include <random>

#include "dfi/data.hpp"
#include "dfi/metrics.hpp"
#include "dfi/model.hpp"
#include "dfi/ops.hpp"
#include "dfi/trainer.hpp"

using namespace dfi;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed) {
  Tensor t(std::move(shape), 0.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const int64_t c = state.range(0);
  const Var x = Var::constant(random_tensor({1, c, 32, 32}, 1));
  const Var w = Var::constant(random_tensor({c, c, 3, 3}, 2));
  const Var b = Var::constant(random_tensor({c}, 3));
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, {1, 1, 1}).value()[0]);
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(32)->Arg(64);

void BM_ModelForward(benchmark::State& state) {
  Model model(ModelConfig{});
  const Tensor x = random_tensor({1, 3, state.range(0), state.range(0)}, 4);
  for (auto _ : state) {
    NoGradGuard guard;
    benchmark::DoNotOptimize(model.forward_all(x).size());
  }
}
BENCHMARK(BM_ModelForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const SyntheticSet set = generate_synthetic(SyntheticSpec{}, 1);
  Model model(ModelConfig{});
  Trainer trainer(model, TrainConfig{}, LossConfig{});
  Batch batch;
  for (Task t : kAllTasks) batch[t] = make_batch(set.for_task(t), {0});
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

GrayMap blurred_edges(int size) {
  SyntheticSpec spec;
  spec.canvas = size;
  const GrayMap gt = GrayMap::from_tensor(generate_synthetic(spec, 1).edge.get(0).gt);
  GrayMap p(gt.height, gt.width);
  for (int y = 1; y + 1 < gt.height; ++y)
    for (int x = 1; x + 1 < gt.width; ++x)
      p.at(y, x) = 0.5 * gt.at(y, x) + 0.125 * (gt.at(y - 1, x) + gt.at(y + 1, x) + gt.at(y, x - 1) + gt.at(y, x + 1));
  return p;
}

void BM_NmsThin(benchmark::State& state) {
  const GrayMap p = blurred_edges(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(nms_thin(p).values.data());
}
BENCHMARK(BM_NmsThin)->Arg(64)->Arg(256);

void BM_Correspond(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const GrayMap gt = blurred_edges(size);
  GrayMap pred = nms_thin(gt), bin(gt.height, gt.width);
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    bin.values[i] = gt.values[i] > 0.4 ? 1.0 : 0.0;
    pred.values[i] = pred.values[i] > 0.2 ? 1.0 : 0.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(correspond(pred, bin, MatchTolerance{}).tp);
}
BENCHMARK(BM_Correspond)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
