#include "lomae/tomo.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "lomae/fft.hpp"
#include "lomae/rng.hpp"

namespace lomae::tomo {

PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "shepp_logan") return PhantomKind::shepp_logan;
  if (s == "ellipse_soup") return PhantomKind::ellipse_soup;
  if (s == "disk") return PhantomKind::disk;
  throw std::invalid_argument("unknown phantom kind: " + s);
}

FbpFilter fbp_filter_from_string(const std::string& s) {
  if (s == "ramp") return FbpFilter::ramp;
  if (s == "hann") return FbpFilter::hann;
  throw std::invalid_argument("unknown fbp filter: " + s);
}

double pixel_size_for_grid(int n) { return 0.6641 * 256.0 / static_cast<double>(n); }

namespace {

struct Ellipse {
  double value, a, b, x0, y0, phi_deg;
};

// Standard modified Shepp-Logan parameter set; additive region values land in
// {0, 0.1, 0.2, 0.3, 1.0}.
const Ellipse kSheppLogan[] = {
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
};

// 4x4 supersampled rasterization on [-1,1]^2. Subsample sums are clamped to
// [0,1], so pixel values stay normalized where ellipses overlap. Band-limited
// edges also keep the projector/FBP pair honest: a hard-edged grid would be
// dominated by its own aliasing.
void rasterize(Tensor& img, const std::vector<Ellipse>& ellipses) {
  const int64_t n = img.dim(0);
  const double scale = 2.0 / static_cast<double>(n);
  constexpr int ss = 4;
  constexpr double inv_ss2 = 1.0 / (ss * ss);
  std::vector<double> cphi(ellipses.size()), sphi(ellipses.size());
  for (size_t e = 0; e < ellipses.size(); ++e) {
    cphi[e] = std::cos(ellipses[e].phi_deg * M_PI / 180.0);
    sphi[e] = std::sin(ellipses[e].phi_deg * M_PI / 180.0);
  }
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int i = 0; i < ss; ++i) {
        const double rr = static_cast<double>(r) + (i + 0.5) / ss - 0.5;
        const double y = (static_cast<double>(n - 1) / 2.0 - rr) * scale;
        for (int j = 0; j < ss; ++j) {
          const double cc = static_cast<double>(c) + (j + 0.5) / ss - 0.5;
          const double x = (cc - static_cast<double>(n - 1) / 2.0) * scale;
          double v = 0.0;
          for (size_t e = 0; e < ellipses.size(); ++e) {
            const double dx = x - ellipses[e].x0, dy = y - ellipses[e].y0;
            const double xr = dx * cphi[e] + dy * sphi[e];
            const double yr = -dx * sphi[e] + dy * cphi[e];
            if ((xr * xr) / (ellipses[e].a * ellipses[e].a) +
                    (yr * yr) / (ellipses[e].b * ellipses[e].b) <=
                1.0)
              v += ellipses[e].value;
          }
          acc += std::clamp(v, 0.0, 1.0);
        }
      }
      img.at(r, c) = acc * inv_ss2;
    }
  }
}

}  // namespace

Phantom make_phantom(PhantomKind kind, int n, uint64_t seed) {
  if (n < 16) throw std::invalid_argument("make_phantom: grid must be at least 16");
  Tensor img({n, n});
  switch (kind) {
    case PhantomKind::shepp_logan: {
      rasterize(img, std::vector<Ellipse>(std::begin(kSheppLogan), std::end(kSheppLogan)));
      break;
    }
    case PhantomKind::disk: {
      const double radius = 0.35;
      rasterize(img, {{1.0, radius, radius, 0.0, 0.0, 0.0}});
      break;
    }
    case PhantomKind::ellipse_soup: {
      Rng rng(seed);
      std::vector<Ellipse> ellipses;
      // Soft elliptical body plus non-overlapping interior features.
      // Intensities stay soft-tissue-like so the densest chord sits below
      // ~9 optical depths and the lowest dose of the standard series does
      // not clamp.
      ellipses.push_back({rng.uniform(0.15, 0.22), rng.uniform(0.55, 0.75), rng.uniform(0.6, 0.8),
                          0.0, 0.0, rng.uniform(0.0, 180.0)});
      const int features = 4 + static_cast<int>(rng.index(5));
      for (int i = 0; i < features; ++i) {
        for (int attempt = 0; attempt < 30; ++attempt) {
          Ellipse e;
          e.value = rng.uniform(0.08, 0.18);
          e.a = rng.uniform(0.05, 0.25);
          e.b = rng.uniform(0.05, 0.25);
          e.x0 = rng.uniform(-0.35, 0.35);
          e.y0 = rng.uniform(-0.35, 0.35);
          e.phi_deg = rng.uniform(0.0, 180.0);
          bool overlaps = false;
          for (size_t j = 1; j < ellipses.size(); ++j) {
            const double dist = std::hypot(e.x0 - ellipses[j].x0, e.y0 - ellipses[j].y0);
            if (dist < std::max(e.a, e.b) + std::max(ellipses[j].a, ellipses[j].b)) {
              overlaps = true;
              break;
            }
          }
          if (!overlaps) {
            ellipses.push_back(e);
            break;
          }
        }
      }
      rasterize(img, ellipses);
      break;
    }
  }
  return Phantom{std::move(img), pixel_size_for_grid(n)};
}

ProjectionGeometry scanner_fan_geometry(int n_views) {
  ProjectionGeometry g;
  g.beam = BeamGeometry::fan;
  g.n_views = n_views;
  g.n_detectors = 1024;
  g.detector_pitch_mm = 1.2854;
  return g;
}

namespace {

// Bilinear sample of img at physical (x, y) mm; outside the grid reads zero.
inline double sample_bilinear(const Tensor& img, int64_t n, double px, double x, double y) {
  const double half = static_cast<double>(n - 1) / 2.0;
  const double col = x / px + half;
  const double row = half - y / px;
  if (col <= -1.0 || col >= static_cast<double>(n) || row <= -1.0 || row >= static_cast<double>(n))
    return 0.0;
  const int64_t c0 = static_cast<int64_t>(std::floor(col));
  const int64_t r0 = static_cast<int64_t>(std::floor(row));
  const double fc = col - static_cast<double>(c0);
  const double fr = row - static_cast<double>(r0);
  auto pix = [&](int64_t r, int64_t c) -> double {
    if (r < 0 || r >= n || c < 0 || c >= n) return 0.0;
    return img.at(r, c);
  };
  return (1.0 - fr) * ((1.0 - fc) * pix(r0, c0) + fc * pix(r0, c0 + 1)) +
         fr * ((1.0 - fc) * pix(r0 + 1, c0) + fc * pix(r0 + 1, c0 + 1));
}

void fill_parallel_defaults(ProjectionGeometry& g, int n, double px) {
  if (g.detector_pitch_mm <= 0.0) g.detector_pitch_mm = px;
  if (g.n_detectors <= 0) {
    // cover the grid diagonal, odd count so detector (n_det-1)/2 sits on t = 0
    int nd = static_cast<int>(std::ceil(static_cast<double>(n) * M_SQRT2 * px /
                                        g.detector_pitch_mm)) + 3;
    if (nd % 2 == 0) ++nd;
    g.n_detectors = nd;
  }
}

}  // namespace

Sinogram radon_project(const Phantom& phantom, const ProjectionGeometry& geometry) {
  if (geometry.n_views < 1) throw std::invalid_argument("radon_project: n_views must be >= 1");
  if (phantom.pixels.rank() != 2 || phantom.pixels.dim(0) != phantom.pixels.dim(1))
    throw std::invalid_argument("radon_project: phantom must be a square grid");
  const int64_t n = phantom.pixels.dim(0);
  const double px = phantom.pixel_size_mm;

  ProjectionGeometry g = geometry;
  if (g.beam == BeamGeometry::parallel) {
    fill_parallel_defaults(g, static_cast<int>(n), px);
  } else {
    if (g.n_detectors <= 0 || g.detector_pitch_mm <= 0.0) {
      const ProjectionGeometry ref = scanner_fan_geometry(g.n_views);
      if (g.n_detectors <= 0) g.n_detectors = ref.n_detectors;
      if (g.detector_pitch_mm <= 0.0) g.detector_pitch_mm = ref.detector_pitch_mm;
    }
  }

  const double ds = g.sample_step_px * px;
  const double mu = g.mu_per_unit_mm;
  Tensor values({g.n_views, g.n_detectors});
  const double det_half = static_cast<double>(g.n_detectors - 1) / 2.0;

  if (g.beam == BeamGeometry::parallel) {
    const double span = static_cast<double>(n) * px * M_SQRT1_2 + px;  // half-diagonal + margin
    const int steps = static_cast<int>(std::ceil(2.0 * span / ds)) + 1;
    for (int v = 0; v < g.n_views; ++v) {
      const double theta = M_PI * static_cast<double>(v) / static_cast<double>(g.n_views);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (int k = 0; k < g.n_detectors; ++k) {
        const double t = (static_cast<double>(k) - det_half) * g.detector_pitch_mm;
        double acc = 0.0;
        for (int i = 0; i < steps; ++i) {
          const double s = -span + static_cast<double>(i) * ds;
          acc += sample_bilinear(phantom.pixels, n, px, t * ct - s * st, t * st + s * ct);
        }
        values.at(v, k) = acc * ds * mu;
      }
    }
  } else {
    const double dso = g.source_isocenter_mm;
    const double dsd = g.source_detector_mm;
    for (int v = 0; v < g.n_views; ++v) {
      const double beta = 2.0 * M_PI * static_cast<double>(v) / static_cast<double>(g.n_views);
      const double cb = std::cos(beta), sb = std::sin(beta);
      const double sx = dso * cb, sy = dso * sb;  // source position
      for (int k = 0; k < g.n_detectors; ++k) {
        const double u = (static_cast<double>(k) - det_half) * g.detector_pitch_mm;
        // detector element position: along the central ray, offset by u
        const double dx = sx - dsd * cb - u * sb;
        const double dy = sy - dsd * sb + u * cb;
        const double len = std::hypot(dx - sx, dy - sy);
        const int steps = static_cast<int>(std::ceil(len / ds)) + 1;
        const double ux = (dx - sx) / len, uy = (dy - sy) / len;
        double acc = 0.0;
        for (int i = 0; i < steps; ++i) {
          const double s = static_cast<double>(i) * ds;
          acc += sample_bilinear(phantom.pixels, n, px, sx + s * ux, sy + s * uy);
        }
        values.at(v, k) = acc * ds * mu;
      }
    }
  }

  Sinogram sino;
  sino.values = std::move(values);
  sino.geometry = g;
  sino.pixel_size_mm = px;
  sino.source_n = static_cast<int>(n);
  return sino;
}

NoiseClampError::NoiseClampError(int64_t clamped, int64_t total)
    : std::runtime_error("inject_noise: " + std::to_string(clamped) + " of " +
                         std::to_string(total) +
                         " entries hit the photon floor (>1%); dose too low for this geometry"),
      report{clamped, total} {}

Sinogram inject_noise(const Sinogram& clean, const DoseSetting& dose, NoiseReport* report) {
  if (dose.intensity_I0 <= 0.0) throw std::invalid_argument("inject_noise: I0 must be positive");
  if (dose.electronic_variance < 0.0)
    throw std::invalid_argument("inject_noise: electronic variance must be non-negative");
  if (clean.values.min() < 0.0)
    throw std::invalid_argument("inject_noise: clean sinogram must be non-negative");

  Rng rng(dose.rng_seed);
  const double I0 = dose.intensity_I0;
  const double sigma_e = std::sqrt(dose.electronic_variance);

  Sinogram noisy = clean;
  NoiseReport rep;
  rep.total = clean.values.size();
  for (int64_t i = 0; i < noisy.values.size(); ++i) {
    const double lambda = I0 * std::exp(-clean.values[i]);
    const double counts =
        dose.mean_poisson_hook ? lambda : static_cast<double>(rng.poisson(lambda));
    const double electronic = sigma_e > 0.0 ? rng.normal(0.0, sigma_e) : 0.0;
    double denom = counts + electronic;
    if (denom < kDenominatorFloor) {
      denom = kDenominatorFloor;
      ++rep.clamped;
    }
    noisy.values[i] = std::log(I0 / denom);
  }
  if (report) *report = rep;
  if (100 * rep.clamped > rep.total) throw NoiseClampError(rep.clamped, rep.total);
  return noisy;
}

std::vector<double> standard_dose_series() { return {1.0e5, 8.0e4, 6.0e4, 4.0e4, 2.0e4}; }
double quarter_dose_intensity() { return 2.5e5; }

namespace {

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Discrete ramp filter response on a length-L circular grid (band-limited
// ramp built in the spatial domain, then transformed).
std::vector<std::complex<double>> ramp_response(int L, double tau, FbpFilter filter) {
  std::vector<std::complex<double>> h(static_cast<size_t>(L), 0.0);
  h[0] = 1.0 / (4.0 * tau * tau);
  for (int j = 1; j <= L / 2; ++j) {
    double v = 0.0;
    if (j % 2 == 1) v = -1.0 / (M_PI * M_PI * static_cast<double>(j) * static_cast<double>(j) *
                                tau * tau);
    h[static_cast<size_t>(j)] = v;
    h[static_cast<size_t>(L - j)] = v;
  }
  fft_1d(h.data(), L, false);
  if (filter == FbpFilter::hann) {
    for (int k = 0; k < L; ++k)
      h[static_cast<size_t>(k)] *=
          0.5 * (1.0 + std::cos(2.0 * M_PI * static_cast<double>(k) / static_cast<double>(L)));
  }
  return h;
}

// Ramp-filter every row of proj (n_views x n_det) with detector pitch tau.
Tensor filter_rows(const Tensor& proj, double tau, FbpFilter filter) {
  const int n_views = static_cast<int>(proj.dim(0));
  const int n_det = static_cast<int>(proj.dim(1));
  const int L = next_pow2(2 * n_det);
  const auto H = ramp_response(L, tau, filter);
  Tensor out({n_views, n_det});
  std::vector<std::complex<double>> buf(static_cast<size_t>(L));
  for (int v = 0; v < n_views; ++v) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int k = 0; k < n_det; ++k) buf[static_cast<size_t>(k)] = proj.at(v, k);
    fft_1d(buf.data(), L, false);
    for (int k = 0; k < L; ++k) buf[static_cast<size_t>(k)] *= H[static_cast<size_t>(k)];
    fft_1d(buf.data(), L, true);
    for (int k = 0; k < n_det; ++k) out.at(v, k) = buf[static_cast<size_t>(k)].real() * tau;
  }
  return out;
}

inline double interp_row(const Tensor& rows, int v, double u, int n_det) {
  if (u <= 0.0 || u >= static_cast<double>(n_det - 1)) {
    // outside the detector: nearest sample if within half a cell, else zero
    if (u > -0.5 && u <= 0.0) return rows.at(v, 0);
    if (u >= static_cast<double>(n_det - 1) && u < static_cast<double>(n_det) - 0.5)
      return rows.at(v, n_det - 1);
    return 0.0;
  }
  const int k0 = static_cast<int>(std::floor(u));
  const double f = u - static_cast<double>(k0);
  return (1.0 - f) * rows.at(v, k0) + f * rows.at(v, k0 + 1);
}

}  // namespace

Slice fbp_reconstruct(const Sinogram& sino, FbpFilter filter, int n) {
  if (n <= 0) throw std::invalid_argument("fbp_reconstruct: output size must be positive");
  if (sino.source_n <= 0 || sino.pixel_size_mm <= 0.0)
    throw std::invalid_argument("fbp_reconstruct: sinogram lacks source geometry");
  const ProjectionGeometry& g = sino.geometry;
  const int n_views = g.n_views;
  const int n_det = g.n_detectors;
  if (sino.values.dim(0) != n_views || sino.values.dim(1) != n_det)
    throw std::invalid_argument("fbp_reconstruct: sinogram geometry mismatch with value array");
  // output grid keeps the source field of view
  const double px_out = sino.pixel_size_mm * static_cast<double>(sino.source_n) /
                        static_cast<double>(n);
  const double fov = static_cast<double>(n) * px_out;
  const double mu = g.mu_per_unit_mm;
  const double det_half = static_cast<double>(n_det - 1) / 2.0;
  const double half = static_cast<double>(n - 1) / 2.0;

  Slice out({n, n});

  if (g.beam == BeamGeometry::parallel) {
    if (static_cast<double>(n_det) * g.detector_pitch_mm < fov)
      throw std::invalid_argument(
          "fbp_reconstruct: detector span does not cover the requested field of view");
    const Tensor q = filter_rows(sino.values, g.detector_pitch_mm, filter);
    const double scale = M_PI / static_cast<double>(n_views) / mu;
    std::vector<double> ct(static_cast<size_t>(n_views)), st(static_cast<size_t>(n_views));
    for (int v = 0; v < n_views; ++v) {
      const double theta = M_PI * static_cast<double>(v) / static_cast<double>(n_views);
      ct[static_cast<size_t>(v)] = std::cos(theta);
      st[static_cast<size_t>(v)] = std::sin(theta);
    }
    for (int r = 0; r < n; ++r) {
      const double y = (half - static_cast<double>(r)) * px_out;
      for (int c = 0; c < n; ++c) {
        const double x = (static_cast<double>(c) - half) * px_out;
        double acc = 0.0;
        for (int v = 0; v < n_views; ++v) {
          const double t = x * ct[static_cast<size_t>(v)] + y * st[static_cast<size_t>(v)];
          acc += interp_row(q, v, t / g.detector_pitch_mm + det_half, n_det);
        }
        out.at(r, c) = acc * scale;
      }
    }
  } else {
    const double dso = g.source_isocenter_mm;
    const double dsd = g.source_detector_mm;
    // rescale the flat detector to the isocenter, cosine-weight, then filter
    const double tau_iso = g.detector_pitch_mm * dso / dsd;
    if (static_cast<double>(n_det) * tau_iso < fov)
      throw std::invalid_argument(
          "fbp_reconstruct: fan detector span does not cover the requested field of view");
    Tensor weighted = sino.values;
    for (int v = 0; v < n_views; ++v)
      for (int k = 0; k < n_det; ++k) {
        const double u = (static_cast<double>(k) - det_half) * tau_iso;
        weighted.at(v, k) *= dso / std::sqrt(dso * dso + u * u);
      }
    const Tensor q = filter_rows(weighted, tau_iso, filter);
    const double dbeta = 2.0 * M_PI / static_cast<double>(n_views);
    const double scale = 0.5 * dbeta / mu;  // half: full-turn rays are measured twice
    for (int r = 0; r < n; ++r) {
      const double y = (half - static_cast<double>(r)) * px_out;
      for (int c = 0; c < n; ++c) {
        const double x = (static_cast<double>(c) - half) * px_out;
        double acc = 0.0;
        for (int v = 0; v < n_views; ++v) {
          const double beta = 2.0 * M_PI * static_cast<double>(v) / static_cast<double>(n_views);
          const double cb = std::cos(beta), sb = std::sin(beta);
          const double ell = dso - (x * cb + y * sb);       // depth along the central ray
          const double perp = -x * sb + y * cb;             // offset across it
          if (ell <= 1e-9) continue;
          const double u_iso = dso * perp / ell;
          const double inv_u2 = (dso / ell) * (dso / ell);
          acc += inv_u2 * interp_row(q, v, u_iso / tau_iso + det_half, n_det);
        }
        out.at(r, c) = acc * scale;
      }
    }
  }
  return out;
}

std::vector<DosePair> make_dose_series(const Phantom& phantom, const std::vector<double>& dose_I0,
                                       const std::vector<uint64_t>& seeds, const SimOptions& opt) {
  if (dose_I0.empty()) throw std::invalid_argument("make_dose_series: empty dose list");
  if (seeds.size() != dose_I0.size())
    throw std::invalid_argument("make_dose_series: need one seed per dose");
  const int out_n = opt.out_n > 0 ? opt.out_n : static_cast<int>(phantom.pixels.dim(0));

  const Sinogram clean_sino = radon_project(phantom, opt.geometry);
  const Slice clean = fbp_reconstruct(clean_sino, opt.filter, out_n);

  std::vector<DosePair> out;
  out.reserve(dose_I0.size());
  for (size_t i = 0; i < dose_I0.size(); ++i) {
    DoseSetting ds;
    ds.intensity_I0 = dose_I0[i];
    ds.electronic_variance = opt.electronic_variance;
    ds.rng_seed = seeds[i];
    const Sinogram noisy_sino = inject_noise(clean_sino, ds);
    DosePair pair;
    pair.noisy = fbp_reconstruct(noisy_sino, opt.filter, out_n);
    pair.clean = clean;
    pair.intensity_I0 = dose_I0[i];
    pair.seed = seeds[i];
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace lomae::tomo
