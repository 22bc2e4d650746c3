#include "lomae/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lomae {

static_assert(std::endian::native == std::endian::little,
              "tensor container IO assumes a little-endian host");

void write_tensor_f32(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  std::ostringstream header;
  header << "dtype=f32 shape=";
  for (int i = 0; i < t.rank(); ++i) header << (i ? "," : "") << t.dim(i);
  header << "\n";
  out << header.str();
  std::vector<float> buf(static_cast<size_t>(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write: " + path);
}

Tensor read_tensor_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("missing container header: " + path);
  const std::string dtype_tag = "dtype=f32 shape=";
  if (header.rfind(dtype_tag, 0) != 0)
    throw std::runtime_error("bad container header '" + header + "' in " + path);
  std::vector<int64_t> shape;
  std::stringstream dims(header.substr(dtype_tag.size()));
  std::string d;
  while (std::getline(dims, d, ',')) shape.push_back(std::stoll(d));
  if (shape.empty()) throw std::runtime_error("empty shape in container header: " + path);
  const int64_t n = shape_numel(shape);
  std::vector<float> buf(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
    throw std::runtime_error("truncated container: " + path);
  Tensor t(shape);
  for (int64_t i = 0; i < n; ++i) t[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
  return t;
}

void write_pgm(const std::string& path, const Tensor& image, double lo, double hi) {
  if (image.rank() != 2) throw std::invalid_argument("write_pgm: rank-2 image required");
  if (lo >= hi) {
    lo = image.min();
    hi = image.max();
    if (hi <= lo) hi = lo + 1.0;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  const int64_t h = image.dim(0), w = image.dim(1);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(w));
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) {
      double v = (image.at(r, c) - lo) / (hi - lo);
      v = std::clamp(v, 0.0, 1.0);
      row[static_cast<size_t>(c)] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace lomae
