#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "data/dataset.hpp"

namespace gendetect::data {

enum class SyntheticFamily {
  shapes_v1,    // circle / square / triangle / cross on a dark noisy background
  textures_v1,  // stripes / checkerboard / dots; used as out-of-distribution data
};

std::string_view to_string(SyntheticFamily family);
std::optional<SyntheticFamily> parse_family(std::string_view name);
std::size_t family_class_count(SyntheticFamily family);

struct SyntheticSpec {
  SyntheticFamily family = SyntheticFamily::shapes_v1;
  std::size_t count = 0;
  std::size_t size = 32;      // square images, size x size
  std::size_t channels = 3;
  std::uint64_t seed = 0;
  float noise = 0.03f;        // std of the per-pixel background noise
};

// Sample i has class i % num_classes and is rendered from its own generator
// derived from (seed, family, i), so output does not depend on generation
// order.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace gendetect::data
