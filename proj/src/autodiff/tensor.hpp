#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common/error.hpp"

namespace gendetect::autodiff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

// Dense row-major array. Image batches use (N, C, H, W) order.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    require(data_.size() == shape_volume(shape_), ErrorCode::shape,
            "tensor data length " + std::to_string(data_.size()) +
                " does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Number of elements per leading-axis entry (one sample of a batch).
  std::size_t sample_size() const {
    return shape_.empty() ? 0 : data_.size() / shape_[0];
  }

  std::span<T> sample(std::size_t n) {
    const std::size_t s = sample_size();
    return std::span<T>(data_).subspan(n * s, s);
  }
  std::span<const T> sample(std::size_t n) const {
    const std::size_t s = sample_size();
    return std::span<const T>(data_).subspan(n * s, s);
  }

  Tensor reshaped(Shape shape) const {
    require(shape_volume(shape) == data_.size(), ErrorCode::shape,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    for (const T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    for (const std::size_t d : shape_)
      require(d > 0, ErrorCode::shape, "tensor dimensions must be positive, got " +
                                           shape_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

// Stacks equally shaped samples into a batch with a new leading axis.
template <class T>
Tensor<T> stack(std::span<const std::span<const T>> samples, const Shape& sample_shape) {
  Shape shape{samples.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  const std::size_t per = shape_volume(sample_shape);
  std::vector<T> data;
  data.reserve(per * samples.size());
  for (const auto& s : samples) {
    require(s.size() == per, ErrorCode::shape, "stack: sample size mismatch");
    data.insert(data.end(), s.begin(), s.end());
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

// Wraps a single sample as a batch of one.
template <class T>
Tensor<T> as_batch(std::span<const T> sample, const Shape& sample_shape) {
  Shape shape{1};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return Tensor<T>(std::move(shape), std::vector<T>(sample.begin(), sample.end()));
}

}  // namespace gendetect::autodiff
