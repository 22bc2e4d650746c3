#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace lomae {

// Dense row-major N-d array of doubles. Everything in the project — slices,
// sinograms, token stacks, weights — lives in one of these.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape, double fill = 0.0);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> data);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }
  static Tensor scalar(double v) { return from({1}, {v}); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 2-D accessors (rows x cols); used heavily for slices and sinograms.
  double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_.back() + c)]; }
  double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_.back() + c)]; }

  // Returns a copy with a new shape; the element count must match.
  Tensor reshaped(std::vector<int64_t> new_shape) const;

  void fill(double v);
  double min() const;
  double max() const;
  double sum() const;
  double mean() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// Elementwise helpers (same shape required).
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

double max_abs_diff(const Tensor& a, const Tensor& b);
bool bit_identical(const Tensor& a, const Tensor& b);

}  // namespace lomae
