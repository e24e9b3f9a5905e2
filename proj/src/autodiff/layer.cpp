#include "autodiff/layer.hpp"

#include <array>
#include <utility>

namespace gendetect::autodiff {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 8> kKindNames{{
    {LayerKind::dense, "dense"},
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::conv_transpose2d, "conv_transpose2d"},
    {LayerKind::relu, "relu"},
    {LayerKind::sigmoid, "sigmoid"},
    {LayerKind::softmax, "softmax"},
    {LayerKind::max_pool2d, "max_pool2d"},
    {LayerKind::flatten, "flatten"},
}};

[[noreturn]] void shape_error(const LayerSpec& spec, const Shape& input, const std::string& why) {
  fail(ErrorCode::shape, std::string(to_string(spec.kind)) + " layer cannot accept input " +
                             shape_string(input) + ": " + why);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out, bool bias) {
  LayerSpec s{.kind = LayerKind::dense};
  s.in_features = in;
  s.out_features = out;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                            std::size_t stride, std::size_t padding, bool bias) {
  LayerSpec s{.kind = LayerKind::conv2d};
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::conv_transpose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                      std::size_t stride, std::size_t padding, bool bias) {
  LayerSpec s = conv2d(in_ch, out_ch, kernel, stride, padding, bias);
  s.kind = LayerKind::conv_transpose2d;
  return s;
}

LayerSpec LayerSpec::max_pool2d(std::size_t window) {
  LayerSpec s{.kind = LayerKind::max_pool2d};
  s.kernel = window;
  s.stride = window;
  return s;
}

Shape LayerSpec::infer_output(const Shape& in) const {
  switch (kind) {
    case LayerKind::dense:
      if (in.size() != 1) shape_error(*this, in, "dense expects a flat feature vector");
      if (in[0] != in_features)
        shape_error(*this, in, "expected " + std::to_string(in_features) + " features");
      if (out_features == 0) shape_error(*this, in, "zero output features");
      return {out_features};
    case LayerKind::conv2d: {
      if (in.size() != 3) shape_error(*this, in, "expects (C,H,W)");
      if (in[0] != in_channels)
        shape_error(*this, in, "expected " + std::to_string(in_channels) + " channels");
      if (kernel == 0 || stride == 0 || out_channels == 0)
        shape_error(*this, in, "kernel, stride and out_channels must be positive");
      const std::size_t h = in[1] + 2 * padding, w = in[2] + 2 * padding;
      if (h < kernel || w < kernel) shape_error(*this, in, "kernel larger than padded input");
      return {out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1};
    }
    case LayerKind::conv_transpose2d: {
      if (in.size() != 3) shape_error(*this, in, "expects (C,H,W)");
      if (in[0] != in_channels)
        shape_error(*this, in, "expected " + std::to_string(in_channels) + " channels");
      if (kernel == 0 || stride == 0 || out_channels == 0)
        shape_error(*this, in, "kernel, stride and out_channels must be positive");
      const std::size_t h = (in[1] - 1) * stride + kernel;
      const std::size_t w = (in[2] - 1) * stride + kernel;
      if (h <= 2 * padding || w <= 2 * padding) shape_error(*this, in, "padding too large");
      return {out_channels, h - 2 * padding, w - 2 * padding};
    }
    case LayerKind::max_pool2d: {
      if (in.size() != 3) shape_error(*this, in, "expects (C,H,W)");
      if (kernel == 0) shape_error(*this, in, "zero pool window");
      if (in[1] < kernel || in[2] < kernel) shape_error(*this, in, "pool window too large");
      return {in[0], (in[1] - kernel) / stride + 1, (in[2] - kernel) / stride + 1};
    }
    case LayerKind::flatten:
      return {shape_volume(in)};
    case LayerKind::softmax:
      if (in.size() != 1) shape_error(*this, in, "softmax expects a flat vector");
      return in;
    case LayerKind::relu:
    case LayerKind::sigmoid:
      return in;
  }
  shape_error(*this, in, "unknown layer kind");
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::dense:
      return {out_features, in_features};
    case LayerKind::conv2d:
      return {out_channels, in_channels, kernel, kernel};
    case LayerKind::conv_transpose2d:
      return {in_channels, out_channels, kernel, kernel};
    default:
      return {};
  }
}

Shape LayerSpec::bias_shape() const {
  if (!has_weights() || !bias) return {};
  return {kind == LayerKind::dense ? out_features : out_channels};
}

std::size_t LayerSpec::fan_in() const {
  switch (kind) {
    case LayerKind::dense:
      return in_features;
    case LayerKind::conv2d:
      return in_channels * kernel * kernel;
    case LayerKind::conv_transpose2d: {
      // Each output pixel sees roughly kernel^2 / stride^2 taps per input channel.
      const std::size_t taps = (kernel * kernel) / (stride * stride);
      return in_channels * (taps == 0 ? 1 : taps);
    }
    default:
      return 0;
  }
}

}  // namespace gendetect::autodiff
