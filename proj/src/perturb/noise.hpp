#pragma once

#include <span>
#include <vector>

#include "common/rng.hpp"

namespace gendetect::perturb {

// All noise models return a new image clipped to [0,1].

// x + N(0, s^2) per pixel.
std::vector<float> gaussian_noise(std::span<const float> img, double s, Rng& rng);

// Poisson(x * f) / f per pixel; larger f means weaker noise.
std::vector<float> shot_noise(std::span<const float> img, double f, Rng& rng);

// Each pixel is replaced with probability p by 0 or 1 (fair coin).
std::vector<float> impulse_noise(std::span<const float> img, double p, Rng& rng);

}  // namespace gendetect::perturb
