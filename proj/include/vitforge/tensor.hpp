#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "vitforge/errors.hpp"

namespace vitforge {

inline std::string shape_to_string(const std::vector<int>& shape) {
  if (shape.empty()) return "[]";
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  out += "]";
  return out;
}

// Dense row-major n-dimensional array. Element type is float for all model
// state; the double instantiation backs the high-precision verification path.
template <class T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

  TensorT(std::vector<int> shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != checked_numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_to_string(shape_));
    }
  }

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int> shape, T value) {
    TensorT t(std::move(shape));
    t.fill(value);
    return t;
  }

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T& at(int i, int j) { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
  T at(int i, int j) const { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }

  // Contiguous view of row r of a rank-2 tensor.
  std::span<T> row(int r) {
    return {data_.data() + static_cast<std::size_t>(r) * dim(1),
            static_cast<std::size_t>(dim(1))};
  }
  std::span<const T> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * dim(1),
            static_cast<std::size_t>(dim(1))};
  }

  void fill(T value) {
    for (auto& v : data_) v = value;
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  std::string shape_str() const { return shape_to_string(shape_); }

  TensorT reshaped(std::vector<int> new_shape) const {
    if (checked_numel(new_shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_str() + " to " +
                           shape_to_string(new_shape));
    }
    return TensorT(std::move(new_shape), data_);
  }

  // Rank-2 transpose.
  TensorT transposed() const {
    if (rank() != 2) {
      throw DimensionError("transpose requires a rank-2 tensor, got " + shape_str());
    }
    const int r = dim(0), c = dim(1);
    TensorT out({c, r});
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) {
        out.data_[static_cast<std::size_t>(j) * r + i] =
            data_[static_cast<std::size_t>(i) * c + j];
      }
    }
    return out;
  }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <class U>
  TensorT<U> cast() const {
    std::vector<U> converted(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) {
      converted[i] = static_cast<U>(data_[i]);
    }
    return TensorT<U>(shape_, std::move(converted));
  }

  friend bool operator==(const TensorT& a, const TensorT& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (const int d : shape) {
      if (d <= 0) {
        throw DimensionError("tensor extents must be positive, got " +
                             shape_to_string(shape));
      }
      if (n > (static_cast<std::size_t>(1) << 40) / static_cast<std::size_t>(d)) {
        throw DimensionError("tensor too large: " + shape_to_string(shape));
      }
      n *= static_cast<std::size_t>(d);
    }
    return shape.empty() ? 0 : n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// A parameter tensor paired with its gradient buffer; the gradient always
// mirrors the value's shape and starts at zero.
template <class T = float>
struct GradPairT {
  TensorT<T> value;
  TensorT<T> grad;

  explicit GradPairT(TensorT<T> v)
      : value(std::move(v)), grad(TensorT<T>::zeros(value.shape())) {}

  GradPairT(TensorT<T> v, TensorT<T> g) : value(std::move(v)), grad(std::move(g)) {
    if (!value.same_shape(grad)) {
      throw DimensionError("gradient shape " + grad.shape_str() +
                           " does not match value shape " + value.shape_str());
    }
  }
};

using GradPair = GradPairT<float>;

}  // namespace vitforge
