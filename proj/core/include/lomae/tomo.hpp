#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lomae/image.hpp"
#include "lomae/tensor.hpp"

namespace lomae::tomo {

enum class PhantomKind { shepp_logan, ellipse_soup, disk };
PhantomKind phantom_kind_from_string(const std::string& s);

struct Phantom {
  Tensor pixels;         // [n, n], finite, non-negative, values in [0, 1]
  double pixel_size_mm;  // 0.6641 mm at n = 256; scaled for other grids
};

// Deterministic phantom generator. Grids below 16 are rejected (too small for
// the 8-pixel patching downstream).
Phantom make_phantom(PhantomKind kind, int n, uint64_t seed);

// Physical pixel pitch used for an n-sized grid: the 256-grid matches the
// scanner pixel size, coarser grids keep the same field of view.
double pixel_size_for_grid(int n);

enum class BeamGeometry { parallel, fan };

struct ProjectionGeometry {
  BeamGeometry beam = BeamGeometry::parallel;
  int n_views = 180;
  int n_detectors = 0;            // 0: derived (parallel: cover the grid diagonal)
  double detector_pitch_mm = 0.0; // 0: derived (parallel: source pixel pitch)
  double source_isocenter_mm = 595.0;  // fan beam
  double source_detector_mm = 1085.6;  // fan beam
  // Attenuation of phantom value 1.0 in 1/mm; converts geometric path
  // integrals into optical depth.
  double mu_per_unit_mm = 0.2;
  double sample_step_px = 0.5;  // ray sampling step, in source pixels
};

// Scanner geometry with the fan-beam distances and detector bank of the
// reference acquisition (1024 cells at 1.2854 mm, source-isocenter 595 mm,
// source-detector 1085.6 mm).
ProjectionGeometry scanner_fan_geometry(int n_views = 720);

struct Sinogram {
  Tensor values;  // [n_views, n_detectors], unitless line integrals
  ProjectionGeometry geometry;
  double pixel_size_mm = 0.0;  // source image pitch
  int source_n = 0;            // source image grid size
};

Sinogram radon_project(const Phantom& phantom, const ProjectionGeometry& geometry);

struct DoseSetting {
  double intensity_I0 = 1.0e5;
  double electronic_variance = 10.0;  // sigma_e^2
  uint64_t rng_seed = 0;
  // Test hook: replaces the Poisson draw by its mean, making the transform
  // deterministic (and, with zero electronic variance, the identity).
  bool mean_poisson_hook = false;
};

struct NoiseReport {
  int64_t clamped = 0;
  int64_t total = 0;
};

class NoiseClampError : public std::runtime_error {
 public:
  NoiseClampError(int64_t clamped, int64_t total);
  NoiseReport report;
};

// Photon floor applied to the log denominator; entries below it are clamped
// and counted. More than 1% clamped entries raises NoiseClampError.
constexpr double kDenominatorFloor = 0.1;

// y = ln(I0 / (Poisson(I0 * exp(-yhat)) + Normal(0, sigma_e^2))), seeded and
// reproducible. Draw order is row-major, Poisson before Gaussian per entry.
Sinogram inject_noise(const Sinogram& clean, const DoseSetting& dose,
                      NoiseReport* report = nullptr);

enum class FbpFilter { ramp, hann };
FbpFilter fbp_filter_from_string(const std::string& s);

// Filtered backprojection onto an n x n grid in normalized units.
Slice fbp_reconstruct(const Sinogram& sino, FbpFilter filter, int n);

// The five simulated x-ray intensities, corresponding to 10%..2% dose.
std::vector<double> standard_dose_series();
// 25% of the implied full dose (the series tops out at 1e5 = 10%).
double quarter_dose_intensity();

struct DosePair {
  Slice noisy;
  Slice clean;
  double intensity_I0 = 0.0;
  uint64_t seed = 0;
};

struct SimOptions {
  ProjectionGeometry geometry;
  FbpFilter filter = FbpFilter::hann;
  int out_n = 0;  // 0: source grid size
  double electronic_variance = 10.0;
};

// One noisy/clean pair per dose; the clean member is shared (computed once
// from the noise-free sinogram).
std::vector<DosePair> make_dose_series(const Phantom& phantom, const std::vector<double>& dose_I0,
                                       const std::vector<uint64_t>& seeds, const SimOptions& opt);

}  // namespace lomae::tomo
