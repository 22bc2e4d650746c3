#pragma once

#include <string>

#include "lomae/tensor.hpp"

namespace lomae {

// A slice is a rank-2 tensor of normalized intensities.
using Slice = Tensor;

// Binary tensor container: one plain-text header line
//   dtype=f32 shape=H,W\n
// followed by row-major little-endian 32-bit floats. Rank != 2 arrays use the
// same header with a longer shape list.
void write_tensor_f32(const std::string& path, const Tensor& t);
Tensor read_tensor_f32(const std::string& path);

// 8-bit PGM render, min/max stretched (or fixed range when lo < hi).
void write_pgm(const std::string& path, const Tensor& image, double lo = 0.0, double hi = -1.0);

}  // namespace lomae
