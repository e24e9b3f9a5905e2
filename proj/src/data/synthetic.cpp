#include "data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "common/parallel.hpp"
#include "common/rng.hpp"

namespace gendetect::data {

namespace {

using Color = std::array<float, 3>;

// Foreground colors stay near-saturated so images are close to binary per
// channel; at least one channel is bright.
Color random_foreground(Rng& rng) {
  std::uniform_real_distribution<float> hi(0.78f, 0.96f), lo(0.04f, 0.2f);
  std::uniform_int_distribution<int> mask_pick(1, 7);
  const int mask = mask_pick(rng);
  Color c{};
  for (int k = 0; k < 3; ++k) c[k] = (mask >> k) & 1 ? hi(rng) : lo(rng);
  return c;
}

Color random_background(Rng& rng) {
  std::uniform_real_distribution<float> d(0.02f, 0.08f);
  return {d(rng), d(rng), d(rng)};
}

struct Frame {
  float cx, cy, scale, cos_t, sin_t;

  // Local coordinates in units of `scale`, rotated into the shape frame.
  std::pair<float, float> local(float x, float y) const {
    const float dx = (x - cx) / scale, dy = (y - cy) / scale;
    return {cos_t * dx + sin_t * dy, -sin_t * dx + cos_t * dy};
  }
};

bool inside_shape(int cls, float u, float v) {
  switch (cls) {
    case 0:  // circle
      return u * u + v * v <= 1.0f;
    case 1:  // square
      return std::abs(u) <= 0.8f && std::abs(v) <= 0.8f;
    case 2:  // triangle
      return v >= -0.5f && v <= 1.0f - std::numbers::sqrt3_v<float> * std::abs(u);
    default:  // cross
      return (std::abs(u) <= 0.3f && std::abs(v) <= 1.0f) ||
             (std::abs(v) <= 0.3f && std::abs(u) <= 1.0f);
  }
}

bool inside_texture(int cls, float u, float v, float period, float phase) {
  switch (cls) {
    case 0:  // stripes
      return std::sin(2.0f * std::numbers::pi_v<float> * (u + phase) / period) > 0.0f;
    case 1: {  // checkerboard
      const long a = static_cast<long>(std::floor((u + phase) / period));
      const long b = static_cast<long>(std::floor((v + phase) / period));
      return ((a + b) & 1) == 0;
    }
    default: {  // dots on a square lattice
      const float fu = std::fmod(u + phase + 1000.0f * period, period) - 0.5f * period;
      const float fv = std::fmod(v + phase + 1000.0f * period, period) - 0.5f * period;
      return fu * fu + fv * fv <= 0.09f * period * period;
    }
  }
}

void render(const SyntheticSpec& spec, std::size_t index, int cls, float* out) {
  Rng rng = make_rng(spec.seed, to_string(spec.family), index);
  const std::size_t s = spec.size;
  const float fs = static_cast<float>(s);
  const Color bg = random_background(rng);
  const Color fg = random_foreground(rng);
  std::uniform_real_distribution<float> angle(0.0f, 2.0f * std::numbers::pi_v<float>);
  const float theta = angle(rng);

  Frame frame{};
  float period = 0, phase = 0;
  if (spec.family == SyntheticFamily::shapes_v1) {
    std::uniform_real_distribution<float> scale_d(0.12f * fs, 0.3f * fs);
    frame.scale = scale_d(rng);
    std::uniform_real_distribution<float> pos(frame.scale, fs - frame.scale);
    frame.cx = pos(rng);
    frame.cy = pos(rng);
    frame.cos_t = std::cos(theta);
    frame.sin_t = std::sin(theta);
  } else {
    std::uniform_real_distribution<float> period_d(0.15f * fs, 0.35f * fs);
    period = period_d(rng);
    std::uniform_real_distribution<float> phase_d(0.0f, period);
    phase = phase_d(rng);
    frame = {0.0f, 0.0f, 1.0f, std::cos(theta), std::sin(theta)};
  }

  std::normal_distribution<float> noise(0.0f, spec.noise);
  const std::size_t plane = s * s;
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const auto [u, v] = frame.local(static_cast<float>(x) + 0.5f, static_cast<float>(y) + 0.5f);
      const bool on = spec.family == SyntheticFamily::shapes_v1
                          ? inside_shape(cls, u, v)
                          : inside_texture(cls, u, v, period, phase);
      const Color& c = on ? fg : bg;
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        const float jitter = spec.noise > 0.0f ? noise(rng) : 0.0f;
        out[ch * plane + y * s + x] = std::clamp(c[ch % 3] + jitter, 0.0f, 1.0f);
      }
    }
}

}  // namespace

std::string_view to_string(SyntheticFamily family) {
  return family == SyntheticFamily::shapes_v1 ? "shapes-v1" : "textures-v1";
}

std::optional<SyntheticFamily> parse_family(std::string_view name) {
  if (name == "shapes-v1") return SyntheticFamily::shapes_v1;
  if (name == "textures-v1") return SyntheticFamily::textures_v1;
  return std::nullopt;
}

std::size_t family_class_count(SyntheticFamily family) {
  return family == SyntheticFamily::shapes_v1 ? 4 : 3;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  require(spec.count > 0, ErrorCode::invalid_argument, "synthetic dataset count must be positive");
  require(spec.size >= 8, ErrorCode::invalid_argument, "synthetic image size must be at least 8");
  require(spec.channels >= 1, ErrorCode::invalid_argument, "synthetic channel count must be positive");
  require(spec.noise >= 0.0f, ErrorCode::invalid_argument, "synthetic noise must be non-negative");
  Dataset ds;
  ds.name = std::string(to_string(spec.family));
  ds.num_classes = family_class_count(spec.family);
  ds.images = Tensor<float>({spec.count, spec.channels, spec.size, spec.size});
  ds.labels.resize(spec.count);
  const std::size_t per = spec.channels * spec.size * spec.size;
  parallel_for(spec.count, [&](std::size_t i) {
    const int cls = static_cast<int>(i % ds.num_classes);
    ds.labels[i] = static_cast<std::uint32_t>(cls);
    render(spec, i, cls, ds.images.data().data() + i * per);
  });
  return ds;
}

}  // namespace gendetect::data
