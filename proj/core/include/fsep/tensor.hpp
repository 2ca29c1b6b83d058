#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fsep/error.hpp"

namespace fsep {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense n-dimensional array, row-major, single precision tag per instance.
/// The element type is the template parameter; f32 is the training default,
/// f64 is used for gradient and Hessian verification.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), values_(static_cast<size_t>(shape_size(shape_)), T(0)) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (static_cast<int64_t>(values_.size()) != shape_size(shape_)) {
      raise(ErrorCode::ShapeMismatch,
            "tensor with shape " + shape_to_string(shape_) + " expects " +
                std::to_string(shape_size(shape_)) + " values, got " + std::to_string(values_.size()));
    }
  }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.values_) x = v;
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(values_.size()); }
  int64_t dim(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }

  std::span<const T> values() const { return values_; }
  std::span<T> values() { return values_; }
  const T* data() const { return values_.data(); }
  T* data() { return values_.data(); }

  T& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }

  bool all_finite() const {
    for (T v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.size());
    for (size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<U>(values_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  /// Same values, new shape (row-major reinterpret; sizes must agree).
  Tensor reshaped(Shape new_shape) const {
    if (shape_size(new_shape) != size()) {
      raise(ErrorCode::ShapeMismatch, "reshape " + shape_to_string(shape_) + " -> " +
                                          shape_to_string(new_shape) + " changes element count");
    }
    return Tensor(std::move(new_shape), values_);
  }

 private:
  Shape shape_;
  std::vector<T> values_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace fsep
