#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "autodiff/tensor.hpp"

namespace gendetect::autodiff {

template <class T>
struct LossResult {
  T loss = 0;
  Tensor<T> grad;  // d loss / d network output
};

// Index of the largest entry; ties go to the lowest index.
template <class T>
std::size_t argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

// Softmax along the last axis of a (N, C) tensor with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require(logits.rank() == 2, ErrorCode::shape, "softmax expects (N, C) logits");
  Tensor<T> out(logits.shape());
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  for (std::size_t s = 0; s < n; ++s) {
    const T* z = logits.data().data() + s * c;
    T* p = out.data().data() + s * c;
    const T m = *std::max_element(z, z + c);
    T sum = 0;
    for (std::size_t i = 0; i < c; ++i) sum += (p[i] = std::exp(z[i] - m));
    for (std::size_t i = 0; i < c; ++i) p[i] /= sum;
  }
  return out;
}

// Mean over the batch of -sum(target * log softmax(logits)). Each target row
// must be a probability vector (sum 1 within 1e-6). The returned gradient is
// (softmax - target) / N.
template <class T>
LossResult<T> cross_entropy(const Tensor<T>& logits, const Tensor<T>& target) {
  require(logits.rank() == 2, ErrorCode::shape, "cross_entropy expects (N, C) logits");
  require(target.shape() == logits.shape(), ErrorCode::shape,
          "cross_entropy target shape " + shape_string(target.shape()) +
              " does not match logits " + shape_string(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  LossResult<T> r;
  r.grad = Tensor<T>(logits.shape());
  double total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const T* z = logits.data().data() + s * c;
    const T* t = target.data().data() + s * c;
    double tsum = 0;
    for (std::size_t i = 0; i < c; ++i) {
      require(t[i] >= T(0), ErrorCode::invalid_argument, "cross_entropy target has negative entries");
      tsum += t[i];
    }
    require(std::abs(tsum - 1.0) <= 1e-6, ErrorCode::invalid_argument,
            "cross_entropy target row " + std::to_string(s) + " is not normalized (sum " +
                std::to_string(tsum) + ")");
    const T m = *std::max_element(z, z + c);
    T sum = 0;
    for (std::size_t i = 0; i < c; ++i) sum += std::exp(z[i] - m);
    const T lse = m + std::log(sum);
    T* g = r.grad.data().data() + s * c;
    for (std::size_t i = 0; i < c; ++i) {
      const T logp = z[i] - lse;
      if (t[i] != T(0)) total -= static_cast<double>(t[i]) * static_cast<double>(logp);
      g[i] = (std::exp(logp) - t[i]) / static_cast<T>(n);
    }
  }
  r.loss = static_cast<T>(total / static_cast<double>(n));
  return r;
}

template <class T>
Tensor<T> one_hot(std::span<const std::size_t> classes, std::size_t num_classes) {
  Tensor<T> t({classes.size(), num_classes});
  for (std::size_t s = 0; s < classes.size(); ++s) {
    require(classes[s] < num_classes, ErrorCode::invalid_argument, "class index out of range");
    t[s * num_classes + classes[s]] = T(1);
  }
  return t;
}

template <class T>
Tensor<T> uniform_target(std::size_t batch, std::size_t num_classes) {
  return Tensor<T>({batch, num_classes}, T(1) / static_cast<T>(num_classes));
}

// Mean per-element binary cross-entropy between probabilities `pred` (e.g. a
// sigmoid output) and targets in [0,1]. Predictions are clamped away from 0
// and 1 so the loss stays finite.
template <class T>
LossResult<T> binary_cross_entropy(const Tensor<T>& pred, const Tensor<T>& target) {
  require(pred.shape() == target.shape(), ErrorCode::shape, "bce shape mismatch");
  constexpr T eps = std::is_same_v<T, float> ? T(1e-7) : T(1e-12);
  LossResult<T> r;
  r.grad = Tensor<T>(pred.shape());
  const T inv_n = T(1) / static_cast<T>(pred.size());
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T p = std::clamp(pred[i], eps, T(1) - eps);
    const T t = target[i];
    total -= static_cast<double>(t * std::log(p) + (T(1) - t) * std::log(T(1) - p));
    r.grad[i] = (p - t) / (p * (T(1) - p)) * inv_n;
  }
  r.loss = static_cast<T>(total / static_cast<double>(pred.size()));
  return r;
}

}  // namespace gendetect::autodiff
