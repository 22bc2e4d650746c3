#include <benchmark/benchmark.h>

#include "lomae/swin.hpp"

using namespace lomae;
using namespace lomae::swin;

namespace {
TokenGrid make_grid(int gh, int gw, int window, int d, Rng& rng) {
  Tensor t({1, static_cast<int64_t>(gh) * gw, d});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return partition(ag::constant(t), 1, gh, gw, window);
}
}  // namespace

static void BM_WmhaForward(benchmark::State& state) {
  Rng rng(1);
  const int d = static_cast<int>(state.range(0));
  WindowAttention attn;
  attn.init(d, 4, 4, rng);
  const TokenGrid grid = make_grid(8, 8, 4, d, rng);
  ag::NoGradGuard no_grad;
  for (auto _ : state) {
    auto out = wmha(grid, attn);
    benchmark::DoNotOptimize(out.tokens->value.data());
  }
}
BENCHMARK(BM_WmhaForward)->Arg(32)->Arg(60)->Unit(benchmark::kMicrosecond);

static void BM_BlockPairForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const int d = static_cast<int>(state.range(0));
  SwinBlockPair pair;
  pair.init(d, 4, 4, 2.0, rng);
  Tensor x({1, 64, d});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  for (auto _ : state) {
    auto grid = partition(ag::param(x), 1, 8, 8, 4);
    auto out = swin_block_pair(grid, pair);
    auto loss = ag::mean_all(ag::mul(out.tokens, out.tokens));
    ag::backward(loss);
    benchmark::DoNotOptimize(loss->value[0]);
  }
}
BENCHMARK(BM_BlockPairForwardBackward)->Arg(32)->Arg(60)->Unit(benchmark::kMicrosecond);
