#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "geoadapt/common.hpp"

namespace geoadapt {

// Dense row-major tensor of 64-bit floats. All training math runs in double;
// checkpoints down-convert to 32-bit at serialization time only.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), 0.0);
  }

  Tensor(std::vector<size_t> shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (values.size() != numel_of(shape_))
      throw DimensionError("Tensor: data length does not match shape");
    data_.assign(values.begin(), values.end());
  }

  static Tensor row(std::initializer_list<double> values) {
    Tensor t({1, values.size()});
    size_t i = 0;
    for (double v : values) t.data_[i++] = v;
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t({1});
    t.data_[0] = v;
    return t;
  }

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t numel() const { return data_.size(); }
  size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  size_t cols() const { return shape_.size() < 2 ? (shape_.empty() ? 0 : 1) : shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& at(size_t r, size_t c) { return data_[r * cols() + c]; }
  double at(size_t r, size_t c) const { return data_[r * cols() + c]; }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double scalar_value() const {
    if (numel() != 1) throw DimensionError("Tensor: scalar_value on non-scalar");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

  void zero() { fill(0.0); }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static size_t numel_of(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) {
      if (d == 0) throw DimensionError("Tensor: zero extent in shape");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<size_t> shape_;
  AlignedVec data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bit_identical(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace geoadapt
