#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lomae/rng.hpp"
#include "lomae/tensor.hpp"

using namespace lomae;

TEST_CASE("rng streams are deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform(), y = b.uniform(), z = c.uniform();
    all_equal = all_equal && x == y;
    any_diff = any_diff || x != z;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("normal moments are sane") {
  Rng rng(1);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson matches its mean and variance on both sampler branches") {
  Rng rng(2);
  for (double lambda : {3.0, 200.0}) {  // inversion branch and normal branch
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = static_cast<double>(rng.poisson(lambda));
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(lambda).epsilon(0.02));
    CHECK(var == doctest::Approx(lambda).epsilon(0.05));
  }
}

TEST_CASE("index is in range and shuffle is a permutation") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const int64_t v = rng.index(7);
    CHECK(v >= 0);
    CHECK(v < 7);
  }
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 9) == derive_seed(5, 9));
}

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.mean() == doctest::Approx(1.5));
  t.at(1, 2) = 4.0;
  CHECK(t.max() == 4.0);
  CHECK(t.min() == 1.5);

  const Tensor r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r[5] == 4.0);
  CHECK_THROWS_AS(t.reshaped({4, 4}), std::invalid_argument);

  const Tensor u = Tensor::from({2}, {1.0, 2.0});
  const Tensor v = Tensor::from({2}, {0.5, -1.0});
  CHECK((u + v)[1] == 1.0);
  CHECK((u - v)[0] == 0.5);
  CHECK((2.0 * v)[1] == -2.0);
  CHECK(max_abs_diff(u, v) == doctest::Approx(3.0));
  CHECK(bit_identical(u, u));
  CHECK_FALSE(bit_identical(u, v));
}
