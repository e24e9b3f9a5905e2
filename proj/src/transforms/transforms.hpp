#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autodiff/network.hpp"

namespace gendetect::transforms {

using autodiff::Shape;
using autodiff::Tensor;
using Net = autodiff::Network<float>;

// Images are single samples in (C,H,W) layout. Every filter works per channel,
// mirrors the image at its borders (edge pixel not repeated) and clips the
// result to [0,1].

// Normalized 1-D factor of the discrete Gaussian kernel, length 2*radius+1.
std::vector<double> gaussian_kernel_1d(double sigma, std::size_t radius);
// Default radius: ceil(3 sigma), at least 1.
std::size_t gaussian_radius(double sigma);

std::vector<float> gaussian_filter(std::span<const float> image, const Shape& shape, double sigma);

// Sliding-window median. Even windows extend one pixel further towards the
// top-left; even-sized windows take the lower of the two middle values.
std::vector<float> median_filter(std::span<const float> image, const Shape& shape,
                                 std::size_t window);

// Locally adaptive Wiener estimator over a 3x3 window:
//   out = m + max(s2 - noise, 0) / max(s2, noise) * (x - m)
std::vector<float> wiener_filter(std::span<const float> image, const Shape& shape,
                                 double noise_power);

std::vector<float> autoencoder_transform(std::span<const float> image, const Shape& shape,
                                         const Net& ae);

// Reflected index into [0, n).
std::size_t reflect_index(long i, std::size_t n);

enum class TransformKind { identity, gaussian, wiener, median, autoencoder };

std::string_view to_string(TransformKind kind);
std::optional<TransformKind> parse_transform_kind(std::string_view name);

// One stream's invariance transformation. `param` is sigma (gaussian), the
// noise power (wiener) or the window size (median); unused otherwise.
struct StreamTransform {
  TransformKind kind = TransformKind::identity;
  double param = 0.0;
  std::shared_ptr<const Net> autoencoder;

  static StreamTransform identity() { return {}; }
  static StreamTransform gaussian(double sigma) { return {TransformKind::gaussian, sigma, nullptr}; }
  static StreamTransform wiener(double noise) { return {TransformKind::wiener, noise, nullptr}; }
  static StreamTransform median(std::size_t w) {
    return {TransformKind::median, static_cast<double>(w), nullptr};
  }
  static StreamTransform autoencoder_stream(std::shared_ptr<const Net> ae) {
    return {TransformKind::autoencoder, 0.0, std::move(ae)};
  }

  std::vector<float> apply(std::span<const float> image, const Shape& shape) const;
  // Applies the transform to every sample of an (N,C,H,W) batch.
  Tensor<float> apply_batch(const Tensor<float>& batch) const;

  std::string label() const;
};

// Hyperparameter grids searched during detector training.
std::vector<double> default_grid(TransformKind kind);

}  // namespace gendetect::transforms
