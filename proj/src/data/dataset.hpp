#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"

namespace gendetect::data {

using autodiff::Shape;
using autodiff::Tensor;

inline constexpr const char* kDatasetFormat = "gendetect-ds-1";

// In-memory form of a dataset container: N images (N,C,H,W) in [0,1] plus one
// label per image.
struct Dataset {
  std::string name;
  std::size_t num_classes = 0;
  Tensor<float> images;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const {
    return images.empty() ? Shape{} : Shape(images.shape().begin() + 1, images.shape().end());
  }
  std::span<const float> image(std::size_t i) const { return images.sample(i); }

  // Checks labels < num_classes, pixel range and payload sizes.
  void validate() const;
};

// Copies the listed samples into a new dataset with the same metadata.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

// Container layout: <dir>/meta.json, <dir>/images.f32 (little-endian float32,
// N*C*H*W) and <dir>/labels.u32 (little-endian uint32, N).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Little-endian raw payload helpers shared by the file formats.
void write_f32_le(std::ostream& os, std::span<const float> values);
void write_u32_le(std::ostream& os, std::span<const std::uint32_t> values);
std::vector<float> read_f32_le(const std::filesystem::path& path);
std::vector<std::uint32_t> read_u32_le(const std::filesystem::path& path, const char* what);

}  // namespace gendetect::data
