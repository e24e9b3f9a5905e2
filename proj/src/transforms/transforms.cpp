#include "transforms/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "models/models.hpp"

namespace gendetect::transforms {

namespace {

struct Geometry {
  std::size_t channels, height, width;
};

Geometry geometry(std::span<const float> image, const Shape& shape) {
  require(shape.size() == 3, ErrorCode::shape,
          "filters expect a (C,H,W) image, got " + autodiff::shape_string(shape));
  require(image.size() == autodiff::shape_volume(shape), ErrorCode::shape,
          "image length does not match its shape");
  return {shape[0], shape[1], shape[2]};
}

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long r = i % period;
  if (r < 0) r += period;
  if (r >= static_cast<long>(n)) r = period - r;
  return static_cast<std::size_t>(r);
}

std::size_t gaussian_radius(double sigma) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3.0 * sigma)));
}

std::vector<double> gaussian_kernel_1d(double sigma, std::size_t radius) {
  require(sigma > 0.0, ErrorCode::invalid_argument, "gaussian sigma must be positive");
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double u = static_cast<double>(i) - static_cast<double>(radius);
    sum += (k[i] = std::exp(-u * u / (2.0 * sigma * sigma)));
  }
  for (auto& v : k) v /= sum;
  return k;
}

std::vector<float> gaussian_filter(std::span<const float> image, const Shape& shape, double sigma) {
  const Geometry g = geometry(image, shape);
  const std::size_t r = gaussian_radius(sigma);
  const auto k = gaussian_kernel_1d(sigma, r);
  const std::size_t taps = k.size();
  std::vector<double> k2(taps * taps);
  for (std::size_t a = 0; a < taps; ++a)
    for (std::size_t b = 0; b < taps; ++b) k2[a * taps + b] = k[a] * k[b];

  std::vector<float> out(image.size());
  const long rr = static_cast<long>(r);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* src = image.data() + c * g.height * g.width;
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        double acc = 0;
        for (long dy = -rr; dy <= rr; ++dy) {
          const std::size_t sy = reflect_index(static_cast<long>(y) + dy, g.height);
          const double* krow = k2.data() + static_cast<std::size_t>(dy + rr) * taps;
          for (long dx = -rr; dx <= rr; ++dx) {
            const std::size_t sx = reflect_index(static_cast<long>(x) + dx, g.width);
            acc += krow[dx + rr] * src[sy * g.width + sx];
          }
        }
        out[(c * g.height + y) * g.width + x] = clip01(acc);
      }
  }
  return out;
}

std::vector<float> median_filter(std::span<const float> image, const Shape& shape,
                                 std::size_t window) {
  require(window >= 2, ErrorCode::invalid_argument,
          "median window must be at least 2, got " + std::to_string(window));
  const Geometry g = geometry(image, shape);
  const long lo = -static_cast<long>(window / 2);
  const long hi = static_cast<long>(window) - 1 + lo;
  const std::size_t count = window * window;
  const std::size_t rank = (count - 1) / 2;
  std::vector<float> buf(count);
  std::vector<float> out(image.size());
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* src = image.data() + c * g.height * g.width;
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        std::size_t n = 0;
        for (long dy = lo; dy <= hi; ++dy) {
          const std::size_t sy = reflect_index(static_cast<long>(y) + dy, g.height);
          for (long dx = lo; dx <= hi; ++dx)
            buf[n++] = src[sy * g.width + reflect_index(static_cast<long>(x) + dx, g.width)];
        }
        std::nth_element(buf.begin(), buf.begin() + static_cast<long>(rank), buf.end());
        out[(c * g.height + y) * g.width + x] = std::clamp(buf[rank], 0.0f, 1.0f);
      }
  }
  return out;
}

std::vector<float> wiener_filter(std::span<const float> image, const Shape& shape,
                                 double noise_power) {
  require(noise_power > 0.0, ErrorCode::invalid_argument, "wiener noise power must be positive");
  const Geometry g = geometry(image, shape);
  std::vector<float> out(image.size());
  double patch[9];
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* src = image.data() + c * g.height * g.width;
    for (std::size_t y = 0; y < g.height; ++y)
      for (std::size_t x = 0; x < g.width; ++x) {
        int n = 0;
        double mean = 0;
        for (long dy = -1; dy <= 1; ++dy) {
          const std::size_t sy = reflect_index(static_cast<long>(y) + dy, g.height);
          for (long dx = -1; dx <= 1; ++dx) {
            patch[n] = src[sy * g.width + reflect_index(static_cast<long>(x) + dx, g.width)];
            mean += patch[n++];
          }
        }
        mean /= 9.0;
        double var = 0;
        for (const double v : patch) var += (v - mean) * (v - mean);
        var /= 9.0;
        const double gain = std::max(var - noise_power, 0.0) / std::max(var, noise_power);
        const double value = src[y * g.width + x];
        out[(c * g.height + y) * g.width + x] = clip01(mean + gain * (value - mean));
      }
  }
  return out;
}

std::vector<float> autoencoder_transform(std::span<const float> image, const Shape& shape,
                                         const Net& ae) {
  require(ae.input_shape() == shape, ErrorCode::shape,
          "image " + autodiff::shape_string(shape) + " is incompatible with autoencoder input " +
              autodiff::shape_string(ae.input_shape()));
  const auto out = models::reconstruct(ae, autodiff::as_batch(image, shape));
  return std::vector<float>(out.data().begin(), out.data().end());
}

std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::identity: return "identity";
    case TransformKind::gaussian: return "gaussian";
    case TransformKind::wiener: return "wiener";
    case TransformKind::median: return "median";
    case TransformKind::autoencoder: return "autoencoder";
  }
  return "unknown";
}

std::optional<TransformKind> parse_transform_kind(std::string_view name) {
  for (const auto k : {TransformKind::identity, TransformKind::gaussian, TransformKind::wiener,
                       TransformKind::median, TransformKind::autoencoder})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::vector<float> StreamTransform::apply(std::span<const float> image, const Shape& shape) const {
  switch (kind) {
    case TransformKind::identity:
      return std::vector<float>(image.begin(), image.end());
    case TransformKind::gaussian:
      return gaussian_filter(image, shape, param);
    case TransformKind::wiener:
      return wiener_filter(image, shape, param);
    case TransformKind::median:
      require(param >= 0.0, ErrorCode::invalid_argument, "median window must be non-negative");
      return median_filter(image, shape, static_cast<std::size_t>(std::lround(param)));
    case TransformKind::autoencoder:
      require(autoencoder != nullptr, ErrorCode::state, "autoencoder stream has no network");
      return autoencoder_transform(image, shape, *autoencoder);
  }
  fail(ErrorCode::internal, "unknown transform kind");
}

Tensor<float> StreamTransform::apply_batch(const Tensor<float>& batch) const {
  require(batch.rank() == 4, ErrorCode::shape, "apply_batch expects (N,C,H,W)");
  const Shape shape(batch.shape().begin() + 1, batch.shape().end());
  Tensor<float> out(batch.shape());
  for (std::size_t n = 0; n < batch.dim(0); ++n) {
    const auto t = apply(batch.sample(n), shape);
    std::copy(t.begin(), t.end(), out.sample(n).begin());
  }
  return out;
}

std::string StreamTransform::label() const {
  std::ostringstream os;
  os << to_string(kind);
  if (kind == TransformKind::gaussian || kind == TransformKind::wiener ||
      kind == TransformKind::median)
    os << '(' << param << ')';
  return os.str();
}

std::vector<double> default_grid(TransformKind kind) {
  std::vector<double> grid;
  switch (kind) {
    case TransformKind::gaussian:
      for (int i = 1; i <= 10; ++i) grid.push_back(i / 10.0);
      break;
    case TransformKind::wiener:
      for (int i = 1; i <= 10; ++i) grid.push_back(i / 100.0);
      break;
    case TransformKind::median:
      for (int w = 2; w <= 10; ++w) grid.push_back(w);
      break;
    default:
      grid.push_back(0.0);
      break;
  }
  return grid;
}

}  // namespace gendetect::transforms
