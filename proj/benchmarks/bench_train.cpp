#include <benchmark/benchmark.h>

#include "lomae/experiments.hpp"
#include "lomae/train.hpp"

using namespace lomae;

namespace {
Slice noisy_slice(int n, uint64_t seed) {
  Rng rng(seed);
  Slice s({n, n});
  for (int64_t i = 0; i < s.size(); ++i) s[i] = rng.uniform();
  return s;
}
}  // namespace

static void BM_SsimLoss(benchmark::State& state) {
  const Slice a = noisy_slice(64, 1);
  const Slice b = noisy_slice(64, 2);
  for (auto _ : state) {
    auto pred = ag::param(a);
    auto loss = train::loss_combined(pred, ag::constant(b), {1.0, 0.1});
    ag::backward(loss);
    benchmark::DoNotOptimize(loss->value[0]);
  }
}
BENCHMARK(BM_SsimLoss)->Unit(benchmark::kMicrosecond);

static void BM_DeskTrainStep(benchmark::State& state) {
  models::ModelConfig cfg = experiments::desk_model_config();
  models::Model model(cfg, 3);
  train::Adam opt;
  opt.attach(model.params());
  const Slice x = noisy_slice(64, 4);
  const Slice y = noisy_slice(64, 5);
  for (auto _ : state) {
    opt.zero_grad();
    auto input = ag::constant(x.reshaped({1, 1, 64, 64}));
    auto target = ag::constant(y.reshaped({1, 1, 64, 64}));
    auto loss = train::loss_combined(model.forward(input), target, {1.0, 0.1});
    ag::backward(loss);
    opt.step(1e-3);
    benchmark::DoNotOptimize(loss->value[0]);
  }
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond);
