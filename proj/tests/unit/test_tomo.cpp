#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lomae/rng.hpp"
#include "lomae/tomo.hpp"

using namespace lomae;
using namespace lomae::tomo;

namespace {

double rmse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

double rel_diff(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

}  // namespace

TEST_CASE("disk phantom: unit disk on zero background") {
  const Phantom p = make_phantom(PhantomKind::disk, 64, 0);
  CHECK(p.pixels.at(32, 32) == 1.0);  // interior
  CHECK(p.pixels.at(0, 0) == 0.0);    // corner
  CHECK(p.pixels.min() >= 0.0);
  CHECK(p.pixels.max() <= 1.0);
  // area of the rasterized disk matches pi r^2 (r = 0.35 in unit coords)
  const double area = p.pixels.sum() * std::pow(2.0 / 64, 2);
  CHECK(area == doctest::Approx(M_PI * 0.35 * 0.35).epsilon(0.01));
}

TEST_CASE("shepp-logan phantom spans [0, 1] exactly at n=128") {
  const Phantom p = make_phantom(PhantomKind::shepp_logan, 128, 12345);
  CHECK(p.pixels.max() == 1.0);  // pixels fully inside the skull ring
  CHECK(p.pixels.min() == 0.0);  // outside the head
  CHECK(p.pixels.all_finite());
  CHECK(p.pixel_size_mm == doctest::Approx(0.6641 * 2.0));
}

TEST_CASE("ellipse soup is deterministic per seed and normalized") {
  const Phantom a = make_phantom(PhantomKind::ellipse_soup, 64, 7);
  const Phantom b = make_phantom(PhantomKind::ellipse_soup, 64, 7);
  CHECK(bit_identical(a.pixels, b.pixels));
  const Phantom c = make_phantom(PhantomKind::ellipse_soup, 64, 8);
  CHECK_FALSE(bit_identical(a.pixels, c.pixels));
  CHECK(a.pixels.min() >= 0.0);
  CHECK(a.pixels.max() <= 1.0);
}

TEST_CASE("phantom grid below 16 is rejected") {
  CHECK_THROWS_AS(make_phantom(PhantomKind::disk, 15, 0), std::invalid_argument);
}

TEST_CASE("zero phantom projects to a zero sinogram") {
  Phantom zero{Tensor({32, 32}), pixel_size_for_grid(32)};
  for (auto beam : {BeamGeometry::parallel, BeamGeometry::fan}) {
    ProjectionGeometry g;
    g.beam = beam;
    g.n_views = 16;
    const Sinogram s = radon_project(zero, g);
    CHECK(s.values.max() == 0.0);
    CHECK(s.values.min() == 0.0);
  }
}

TEST_CASE("uniform disk: all parallel views agree up to discretization") {
  const Phantom p = make_phantom(PhantomKind::disk, 64, 0);
  ProjectionGeometry g;
  g.n_views = 24;
  const Sinogram s = radon_project(p, g);
  const double peak = s.values.max();
  double worst = 0.0;
  for (int v = 1; v < g.n_views; ++v)
    for (int k = 0; k < s.geometry.n_detectors; ++k)
      worst = std::max(worst, std::fabs(s.values.at(v, k) - s.values.at(0, k)));
  CHECK(worst / peak < 0.02);
}

TEST_CASE("single center pixel peaks at the central detector (ray-tracing oracle)") {
  const int n = 65;  // odd: the center pixel sits exactly on the rotation axis
  Phantom p{Tensor({n, n}), pixel_size_for_grid(n)};
  p.pixels.at(n / 2, n / 2) = 1.0;
  ProjectionGeometry g;
  g.n_views = 12;
  const Sinogram s = radon_project(p, g);
  const int n_det = s.geometry.n_detectors;
  REQUIRE(n_det % 2 == 1);

  for (int v = 0; v < g.n_views; ++v) {
    int impl_peak = 0;
    for (int k = 1; k < n_det; ++k)
      if (s.values.at(v, k) > s.values.at(v, impl_peak)) impl_peak = k;

    // brute-force oracle: project a dense point cloud covering the lit pixel
    // onto the detector axis and take the most-hit detector cell
    const double theta = M_PI * v / g.n_views;
    const double px = p.pixel_size_mm;
    std::vector<int> hits(static_cast<size_t>(n_det), 0);
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 40; ++j) {
        const double x = ((i + 0.5) / 40.0 - 0.5) * px;  // pixel centered at origin
        const double y = ((j + 0.5) / 40.0 - 0.5) * px;
        const double t = x * std::cos(theta) + y * std::sin(theta);
        const int k = static_cast<int>(std::lround(t / s.geometry.detector_pitch_mm +
                                                   (n_det - 1) / 2.0));
        if (k >= 0 && k < n_det) ++hits[static_cast<size_t>(k)];
      }
    int oracle_peak = 0;
    for (int k = 1; k < n_det; ++k)
      if (hits[static_cast<size_t>(k)] > hits[static_cast<size_t>(oracle_peak)]) oracle_peak = k;

    CHECK(impl_peak == oracle_peak);
    CHECK(impl_peak == (n_det - 1) / 2);
  }
}

TEST_CASE("projection and FBP are linear") {
  const Phantom pa = make_phantom(PhantomKind::ellipse_soup, 32, 1);
  const Phantom pb = make_phantom(PhantomKind::ellipse_soup, 32, 2);
  const double alpha = 0.7, beta = -0.3;
  Phantom combo = pa;
  for (int64_t i = 0; i < combo.pixels.size(); ++i)
    combo.pixels[i] = alpha * pa.pixels[i] + beta * pb.pixels[i];

  for (auto beam : {BeamGeometry::parallel, BeamGeometry::fan}) {
    ProjectionGeometry g;
    g.beam = beam;
    g.n_views = beam == BeamGeometry::parallel ? 24 : 48;
    if (beam == BeamGeometry::fan) {
      g.n_detectors = 256;
      g.detector_pitch_mm = 1.2854;
    }
    const Sinogram sa = radon_project(pa, g);
    const Sinogram sb = radon_project(pb, g);
    const Sinogram sc = radon_project(combo, g);
    Tensor expected = sa.values;
    for (int64_t i = 0; i < expected.size(); ++i)
      expected[i] = alpha * sa.values[i] + beta * sb.values[i];
    CHECK(rel_diff(sc.values, expected) < 1e-6);
  }

  // fbp(a * sino) == a * fbp(sino)
  ProjectionGeometry g;
  g.n_views = 24;
  const Sinogram s = radon_project(pa, g);
  Sinogram scaled = s;
  for (int64_t i = 0; i < scaled.values.size(); ++i) scaled.values[i] *= 3.25;
  const Slice r1 = fbp_reconstruct(s, FbpFilter::ramp, 32);
  const Slice r2 = fbp_reconstruct(scaled, FbpFilter::ramp, 32);
  Tensor r1_scaled = 3.25 * r1;
  CHECK(rel_diff(r2, r1_scaled) < 1e-9);
}

TEST_CASE("mean-poisson hook makes inject_noise the identity in y-space") {
  const Phantom p = make_phantom(PhantomKind::ellipse_soup, 32, 3);
  ProjectionGeometry g;
  g.n_views = 8;
  const Sinogram clean = radon_project(p, g);
  DoseSetting dose;
  dose.intensity_I0 = 1e5;
  dose.electronic_variance = 0.0;
  dose.mean_poisson_hook = true;
  const Sinogram out = inject_noise(clean, dose);
  CHECK(max_abs_diff(out.values, clean.values) < 1e-12);

  // and exactly zero for a zero sinogram: ln(I0/I0) = 0
  Sinogram zeros = clean;
  zeros.values.fill(0.0);
  const Sinogram out0 = inject_noise(zeros, dose);
  CHECK(out0.values.max() == 0.0);
  CHECK(out0.values.min() == 0.0);
}

TEST_CASE("noise moments match the delta-method prediction (Monte-Carlo)") {
  Sinogram flat;
  flat.values = Tensor({1, 10000});  // yhat = 0 everywhere
  flat.geometry.n_views = 1;
  flat.geometry.n_detectors = 10000;
  flat.pixel_size_mm = 1.0;
  flat.source_n = 64;
  DoseSetting dose;
  dose.intensity_I0 = 1e5;
  dose.electronic_variance = 10.0;
  dose.rng_seed = 99;
  const Sinogram noisy = inject_noise(flat, dose);

  const double mean = noisy.values.mean();
  double var = 0.0;
  for (int64_t i = 0; i < noisy.values.size(); ++i)
    var += (noisy.values[i] - mean) * (noisy.values[i] - mean);
  var /= static_cast<double>(noisy.values.size() - 1);

  const double pred_var = 1.0 / dose.intensity_I0 +
                          dose.electronic_variance / (dose.intensity_I0 * dose.intensity_I0);
  const double se = std::sqrt(pred_var / 1e4);
  CHECK(std::fabs(mean) < 3.0 * se);
  CHECK(var == doctest::Approx(pred_var).epsilon(0.2));
}

TEST_CASE("standard dose series is accepted end to end") {
  const auto doses = standard_dose_series();
  REQUIRE(doses == std::vector<double>{1e5, 8e4, 6e4, 4e4, 2e4});
  const Phantom p = make_phantom(PhantomKind::ellipse_soup, 32, 4);
  ProjectionGeometry g;
  g.n_views = 16;
  const Sinogram clean = radon_project(p, g);
  for (size_t i = 0; i < doses.size(); ++i) {
    DoseSetting dose;
    dose.intensity_I0 = doses[i];
    dose.rng_seed = i;
    NoiseReport report;
    CHECK_NOTHROW(inject_noise(clean, dose, &report));
    CHECK(report.total == clean.values.size());
  }
}

TEST_CASE("photon-floor clamping is counted and gated at 1%") {
  const Phantom p = make_phantom(PhantomKind::disk, 32, 0);  // dense object
  ProjectionGeometry g;
  g.n_views = 8;
  const Sinogram clean = radon_project(p, g);
  DoseSetting dose;
  dose.intensity_I0 = 50.0;  // absurdly low: most rays starve
  dose.rng_seed = 1;
  try {
    inject_noise(clean, dose);
    FAIL("expected NoiseClampError");
  } catch (const NoiseClampError& e) {
    CHECK(e.report.clamped * 100 > e.report.total);
    CHECK(e.report.total == clean.values.size());
  }
}

TEST_CASE("noise is reproducible per seed") {
  const Phantom p = make_phantom(PhantomKind::ellipse_soup, 32, 5);
  ProjectionGeometry g;
  g.n_views = 8;
  const Sinogram clean = radon_project(p, g);
  DoseSetting dose;
  dose.intensity_I0 = 1e5;
  dose.rng_seed = 7;
  const Sinogram a = inject_noise(clean, dose);
  const Sinogram b = inject_noise(clean, dose);
  CHECK(bit_identical(a.values, b.values));
  dose.rng_seed = 8;
  const Sinogram c = inject_noise(clean, dose);
  CHECK_FALSE(bit_identical(a.values, c.values));
}

TEST_CASE("negative clean sinogram is rejected") {
  Sinogram s;
  s.values = Tensor({2, 2});
  s.values[3] = -0.1;
  CHECK_THROWS_AS(inject_noise(s, DoseSetting{}), std::invalid_argument);
}

TEST_CASE("fbp of a zero sinogram is exactly zero") {
  Phantom zero{Tensor({32, 32}), pixel_size_for_grid(32)};
  ProjectionGeometry g;
  g.n_views = 16;
  const Sinogram s = radon_project(zero, g);
  const Slice r = fbp_reconstruct(s, FbpFilter::hann, 32);
  CHECK(r.max() == 0.0);
  CHECK(r.min() == 0.0);
}

TEST_CASE("radon -> fbp roundtrip on shepp-logan stays under 0.05 RMSE") {
  const Phantom p = make_phantom(PhantomKind::shepp_logan, 128, 0);
  ProjectionGeometry g;
  g.n_views = 360;
  const Sinogram s = radon_project(p, g);
  const Slice rec = fbp_reconstruct(s, FbpFilter::ramp, 128);
  CHECK(rmse(rec, p.pixels) < 0.05);
}

TEST_CASE("fan-beam roundtrip is usable (looser tolerance)") {
  const Phantom p = make_phantom(PhantomKind::shepp_logan, 64, 0);
  ProjectionGeometry g = scanner_fan_geometry(360);
  const Sinogram s = radon_project(p, g);
  const Slice rec = fbp_reconstruct(s, FbpFilter::ramp, 64);
  CHECK(rmse(rec, p.pixels) < 0.08);
}

TEST_CASE("fbp rejects a detector bank narrower than the field of view") {
  const Phantom p = make_phantom(PhantomKind::disk, 32, 0);
  ProjectionGeometry g;
  g.n_views = 8;
  g.n_detectors = 8;  // far too narrow
  const Sinogram s = radon_project(p, g);
  CHECK_THROWS_AS(fbp_reconstruct(s, FbpFilter::ramp, 32), std::invalid_argument);
}

TEST_CASE("dose series shares the clean member and reproduces per seed") {
  const Phantom p = make_phantom(PhantomKind::ellipse_soup, 32, 6);
  SimOptions opt;
  opt.geometry.n_views = 16;
  const std::vector<double> doses = standard_dose_series();
  const std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  const auto series = make_dose_series(p, doses, seeds, opt);
  REQUIRE(series.size() == 5);
  for (const auto& pair : series) CHECK(bit_identical(pair.clean, series[0].clean));
  const auto series2 = make_dose_series(p, doses, seeds, opt);
  for (size_t i = 0; i < series.size(); ++i)
    CHECK(bit_identical(series[i].noisy, series2[i].noisy));

  CHECK_THROWS_AS(make_dose_series(p, {}, {}, opt), std::invalid_argument);
  CHECK_THROWS_AS(make_dose_series(p, doses, {1, 2}, opt), std::invalid_argument);
}

TEST_CASE("residual std is monotone non-increasing in intensity (20-seed average)") {
  const Phantom p = make_phantom(PhantomKind::ellipse_soup, 32, 11);
  SimOptions opt;
  opt.geometry.n_views = 24;
  const auto doses = standard_dose_series();
  std::vector<double> avg_std(doses.size(), 0.0);
  const int n_seeds = 20;
  for (int s = 0; s < n_seeds; ++s) {
    std::vector<uint64_t> seeds;
    for (size_t i = 0; i < doses.size(); ++i)
      seeds.push_back(derive_seed(100 + static_cast<uint64_t>(s), i));
    const auto series = make_dose_series(p, doses, seeds, opt);
    for (size_t i = 0; i < series.size(); ++i)
      avg_std[i] += rmse(series[i].noisy, series[i].clean);
  }
  // doses are listed high-to-low, so std must be non-decreasing along the list
  for (size_t i = 1; i < avg_std.size(); ++i) CHECK(avg_std[i] >= avg_std[i - 1]);
}

TEST_CASE("noisy sinogram log-variance slope vs log-intensity is near -1") {
  Sinogram flat;
  flat.values = Tensor({1, 4000}, 0.05);  // low attenuation
  flat.geometry.n_views = 1;
  flat.geometry.n_detectors = 4000;
  flat.pixel_size_mm = 1.0;
  flat.source_n = 64;

  const auto doses = standard_dose_series();
  std::vector<double> log_var, log_dose;
  for (size_t i = 0; i < doses.size(); ++i) {
    DoseSetting dose;
    dose.intensity_I0 = doses[i];
    dose.rng_seed = 31 + i;
    const Sinogram noisy = inject_noise(flat, dose);
    double mean = noisy.values.mean(), var = 0.0;
    for (int64_t j = 0; j < noisy.values.size(); ++j)
      var += (noisy.values[j] - mean) * (noisy.values[j] - mean);
    var /= static_cast<double>(noisy.values.size() - 1);
    log_var.push_back(std::log(var));
    log_dose.push_back(std::log(doses[i]));
  }
  // least-squares slope
  double mx = 0, my = 0;
  for (size_t i = 0; i < log_var.size(); ++i) {
    mx += log_dose[i];
    my += log_var[i];
  }
  mx /= static_cast<double>(log_var.size());
  my /= static_cast<double>(log_var.size());
  double num = 0, den = 0;
  for (size_t i = 0; i < log_var.size(); ++i) {
    num += (log_dose[i] - mx) * (log_var[i] - my);
    den += (log_dose[i] - mx) * (log_dose[i] - mx);
  }
  const double slope = num / den;
  CHECK(slope > -1.2);
  CHECK(slope < -0.8);
}
