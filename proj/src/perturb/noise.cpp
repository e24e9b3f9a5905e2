#include "perturb/noise.hpp"

#include <algorithm>
#include <random>

#include "common/error.hpp"

namespace gendetect::perturb {

namespace {

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

std::vector<float> gaussian_noise(std::span<const float> img, double s, Rng& rng) {
  require(s >= 0.0, ErrorCode::invalid_argument, "gaussian noise level must be non-negative");
  std::vector<float> out(img.begin(), img.end());
  if (s == 0.0) return out;
  std::normal_distribution<double> d(0.0, s);
  for (auto& v : out) v = clip01(v + d(rng));
  return out;
}

std::vector<float> shot_noise(std::span<const float> img, double f, Rng& rng) {
  require(f > 0.0, ErrorCode::invalid_argument, "shot noise factor must be positive");
  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double mean = static_cast<double>(img[i]) * f;
    if (mean <= 0.0) {
      out[i] = 0.0f;
      continue;
    }
    std::poisson_distribution<long long> d(mean);
    out[i] = clip01(static_cast<double>(d(rng)) / f);
  }
  return out;
}

std::vector<float> impulse_noise(std::span<const float> img, double p, Rng& rng) {
  require(p >= 0.0 && p <= 1.0, ErrorCode::invalid_argument,
          "impulse noise probability must lie in [0,1]");
  std::vector<float> out(img.begin(), img.end());
  if (p == 0.0) return out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : out) {
    const double a = u(rng);
    const double b = u(rng);
    if (a < p) v = b < 0.5 ? 0.0f : 1.0f;
  }
  return out;
}

}  // namespace gendetect::perturb
