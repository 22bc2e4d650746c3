#pragma once

#include <complex>
#include <vector>

namespace lomae {

// Thin wrappers over FFTW (double precision). Forward transforms are
// unnormalized; inverse transforms divide by the element count.
void fft_1d(std::complex<double>* data, int n, bool inverse);
void fft_2d(std::complex<double>* data, int rows, int cols, bool inverse);

// Power spectrum |FFT2(x)|^2 of a real 2-D array (row-major), DC at [0,0].
std::vector<double> power_spectrum_2d(const std::vector<double>& x, int rows, int cols);

}  // namespace lomae
