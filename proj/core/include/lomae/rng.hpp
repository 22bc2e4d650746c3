#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace lomae {

// Deterministic random source. The engine (std::mt19937_64) is fully specified
// by the standard; all distributions are implemented here by hand so that a
// given seed produces the same stream on every platform and stdlib.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, one spare cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Normal truncated to (-2*stddev, 2*stddev) by resampling.
  double truncated_normal(double stddev);

  // Poisson sample: exact inversion for lambda < 30, rounded normal
  // approximation (clamped at 0) above.
  int64_t poisson(double lambda);

  // Uniform integer in [0, n), rejection sampled.
  int64_t index(int64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(index(i + 1))]);
    }
  }

  static constexpr double kPoissonNormalThreshold = 30.0;

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a stream id
// (splitmix64 finalizer).
uint64_t derive_seed(uint64_t base, uint64_t stream);

}  // namespace lomae
