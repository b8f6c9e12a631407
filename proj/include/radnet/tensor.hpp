#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "radnet/rng.hpp"

namespace radnet {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

/// Dense row-major N-dimensional array; the single value type used for
/// activations, parameters and gradients. All dimensions must be positive and
/// the data length always equals the product of the shape.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_numel(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != shape_numel(shape_)) {
      throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<T> data)
      : Tensor(std::move(shape), std::vector<T>(data)) {}

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (T& v : t.data_) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (T& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <typename... Ix>
  T& at(Ix... ix) {
    return data_[offset({static_cast<std::size_t>(ix)...})];
  }
  template <typename... Ix>
  const T& at(Ix... ix) const {
    return data_[offset({static_cast<std::size_t>(ix)...})];
  }

  void fill(T value) { data_.assign(data_.size(), value); }

  /// Reinterprets the shape; the element count must be unchanged.
  Tensor reshaped(Shape new_shape) const& {
    Tensor t = *this;
    t.set_shape(std::move(new_shape));
    return t;
  }
  Tensor reshaped(Shape new_shape) && {
    set_shape(std::move(new_shape));
    return std::move(*this);
  }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }
  bool operator!=(const Tensor& other) const { return !(*this == other); }

 private:
  void validate_shape() const {
    if (shape_.empty()) throw std::invalid_argument("tensor: empty shape");
    for (std::size_t d : shape_) {
      if (d == 0) throw std::invalid_argument("tensor: zero dimension in shape " + shape_str(shape_));
    }
  }

  void set_shape(Shape new_shape) {
    const std::size_t n = shape_numel(new_shape);
    if (new_shape.empty() || n != data_.size()) {
      throw std::invalid_argument("tensor: cannot reshape " + shape_str(shape_) + " to " +
                                  shape_str(new_shape));
    }
    shape_ = std::move(new_shape);
  }

  Shape shape_;
  std::vector<T> data_;

  std::size_t offset(std::initializer_list<std::size_t> ix) const {
    std::size_t off = 0;
    std::size_t k = 0;
    for (std::size_t i : ix) {
      off = off * shape_[k] + i;
      ++k;
    }
    return off;
  }
};

/// Largest absolute difference between two same-shaped tensors.
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace radnet
