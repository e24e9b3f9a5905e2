#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "autodiff/tensor.hpp"

namespace gendetect::autodiff {

enum class LayerKind {
  dense,
  conv2d,
  conv_transpose2d,
  relu,
  sigmoid,
  softmax,
  max_pool2d,
  flatten,
};

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // dense
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  // conv2d / conv_transpose2d
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;  // also the max-pool window
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = true;

  static LayerSpec dense(std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0, bool bias = true);
  static LayerSpec conv_transpose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                    std::size_t stride = 1, std::size_t padding = 0,
                                    bool bias = true);
  static LayerSpec max_pool2d(std::size_t window);
  static LayerSpec relu() { return LayerSpec{.kind = LayerKind::relu}; }
  static LayerSpec sigmoid() { return LayerSpec{.kind = LayerKind::sigmoid}; }
  static LayerSpec softmax() { return LayerSpec{.kind = LayerKind::softmax}; }
  static LayerSpec flatten() { return LayerSpec{.kind = LayerKind::flatten}; }

  bool has_weights() const {
    return kind == LayerKind::dense || kind == LayerKind::conv2d ||
           kind == LayerKind::conv_transpose2d;
  }

  // Per-sample output shape; throws ErrorCode::shape on incompatible input.
  Shape infer_output(const Shape& input) const;
  Shape weight_shape() const;
  Shape bias_shape() const;
  // Fan-in used by the Kaiming initializer.
  std::size_t fan_in() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

}  // namespace gendetect::autodiff
