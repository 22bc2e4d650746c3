#include "lomae/rng.hpp"

#include <cmath>

namespace lomae {

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 is kept away from 0 so the log is finite.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double Rng::truncated_normal(double stddev) {
  for (;;) {
    const double x = normal();
    if (std::fabs(x) < 2.0) return x * stddev;
  }
}

int64_t Rng::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda < kPoissonNormalThreshold) {
    // Inversion by sequential search.
    const double u = uniform();
    double p = std::exp(-lambda);
    double cdf = p;
    int64_t k = 0;
    const int64_t k_max = static_cast<int64_t>(lambda + 20.0 * std::sqrt(lambda) + 100.0);
    while (u > cdf && k < k_max) {
      ++k;
      p *= lambda / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }
  const double x = std::llround(lambda + std::sqrt(lambda) * normal());
  return x < 0.0 ? 0 : static_cast<int64_t>(x);
}

int64_t Rng::index(int64_t n) {
  if (n <= 1) return 0;
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x = 0;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

uint64_t derive_seed(uint64_t base, uint64_t stream) {
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace lomae
