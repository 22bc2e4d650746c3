#include <benchmark/benchmark.h>

#include "lomae/tomo.hpp"

using namespace lomae::tomo;

static void BM_RadonParallel(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Phantom p = make_phantom(PhantomKind::shepp_logan, n, 0);
  ProjectionGeometry g;
  g.n_views = static_cast<int>(state.range(1));
  for (auto _ : state) {
    auto sino = radon_project(p, g);
    benchmark::DoNotOptimize(sino.values.data());
  }
}
BENCHMARK(BM_RadonParallel)->Args({64, 96})->Args({128, 180})->Unit(benchmark::kMillisecond);

static void BM_FbpReconstruct(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Phantom p = make_phantom(PhantomKind::shepp_logan, n, 0);
  ProjectionGeometry g;
  g.n_views = static_cast<int>(state.range(1));
  const Sinogram sino = radon_project(p, g);
  for (auto _ : state) {
    auto rec = fbp_reconstruct(sino, FbpFilter::ramp, n);
    benchmark::DoNotOptimize(rec.data());
  }
}
BENCHMARK(BM_FbpReconstruct)->Args({64, 96})->Args({128, 180})->Unit(benchmark::kMillisecond);

static void BM_InjectNoise(benchmark::State& state) {
  const Phantom p = make_phantom(PhantomKind::ellipse_soup, 64, 3);
  ProjectionGeometry g;
  g.n_views = 96;
  const Sinogram sino = radon_project(p, g);
  DoseSetting dose;
  dose.intensity_I0 = quarter_dose_intensity();
  uint64_t seed = 0;
  for (auto _ : state) {
    dose.rng_seed = seed++;
    auto noisy = inject_noise(sino, dose);
    benchmark::DoNotOptimize(noisy.values.data());
  }
}
BENCHMARK(BM_InjectNoise)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
