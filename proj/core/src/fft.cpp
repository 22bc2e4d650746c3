#include "lomae/fft.hpp"

#include <fftw3.h>

#include <stdexcept>

namespace lomae {

void fft_1d(std::complex<double>* data, int n, bool inverse) {
  if (n <= 0) throw std::invalid_argument("fft_1d: n must be positive");
  fftw_complex* p = reinterpret_cast<fftw_complex*>(data);
  fftw_plan plan = fftw_plan_dft_1d(n, p, p, inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (int i = 0; i < n; ++i) data[i] *= scale;
  }
}

void fft_2d(std::complex<double>* data, int rows, int cols, bool inverse) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("fft_2d: dims must be positive");
  fftw_complex* p = reinterpret_cast<fftw_complex*>(data);
  fftw_plan plan =
      fftw_plan_dft_2d(rows, cols, p, p, inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  if (inverse) {
    const double scale = 1.0 / (static_cast<double>(rows) * static_cast<double>(cols));
    for (int i = 0; i < rows * cols; ++i) data[i] *= scale;
  }
}

std::vector<double> power_spectrum_2d(const std::vector<double>& x, int rows, int cols) {
  if (static_cast<int>(x.size()) != rows * cols)
    throw std::invalid_argument("power_spectrum_2d: size mismatch");
  std::vector<std::complex<double>> buf(x.begin(), x.end());
  fft_2d(buf.data(), rows, cols, false);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::norm(buf[i]);
  return out;
}

}  // namespace lomae
