#pragma once

// Straightforward reference implementations used to check the optimized code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "autodiff/loss.hpp"
#include "autodiff/network.hpp"

namespace oracle {

using gendetect::autodiff::Network;
using gendetect::autodiff::Shape;
using gendetect::autodiff::Tensor;

// ---- filters ----

inline long mirror(long i, long n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

// Channel-by-channel copy padded by `pad` mirrored pixels on every side.
struct Padded {
  long h, w, pad;
  std::vector<float> data;  // (H+2p) x (W+2p)
  float at(long y, long x) const { return data[(y + pad) * (w + 2 * pad) + (x + pad)]; }
};

inline Padded pad_channel(std::span<const float> img, long h, long w, long c, long pad) {
  Padded p{h, w, pad, std::vector<float>((h + 2 * pad) * (w + 2 * pad))};
  for (long y = -pad; y < h + pad; ++y)
    for (long x = -pad; x < w + pad; ++x)
      p.data[(y + pad) * (w + 2 * pad) + (x + pad)] = img[(c * h + mirror(y, h)) * w + mirror(x, w)];
  return p;
}

inline float clip01(double v) { return static_cast<float>(std::min(1.0, std::max(0.0, v))); }

inline std::vector<float> gaussian(std::span<const float> img, const Shape& s, double sigma) {
  const long r = std::max<long>(1, static_cast<long>(std::ceil(3.0 * sigma)));
  std::vector<double> k;
  double sum = 0;
  for (long u = -r; u <= r; ++u) {
    k.push_back(std::exp(-static_cast<double>(u * u) / (2.0 * sigma * sigma)));
    sum += k.back();
  }
  for (auto& v : k) v /= sum;
  const long c = s[0], h = s[1], w = s[2];
  std::vector<float> out(img.size());
  for (long ch = 0; ch < c; ++ch) {
    const auto p = pad_channel(img, h, w, ch, r);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0;
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx) acc += k[dy + r] * k[dx + r] * p.at(y + dy, x + dx);
        out[(ch * h + y) * w + x] = clip01(acc);
      }
  }
  return out;
}

inline std::vector<float> median(std::span<const float> img, const Shape& s, long window) {
  const long lo = -(window / 2), hi = window - 1 + lo;
  const long c = s[0], h = s[1], w = s[2];
  std::vector<float> out(img.size());
  for (long ch = 0; ch < c; ++ch) {
    const auto p = pad_channel(img, h, w, ch, window);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        std::vector<float> v;
        for (long dy = lo; dy <= hi; ++dy)
          for (long dx = lo; dx <= hi; ++dx) v.push_back(p.at(y + dy, x + dx));
        std::sort(v.begin(), v.end());
        out[(ch * h + y) * w + x] = std::clamp(v[(v.size() - 1) / 2], 0.0f, 1.0f);
      }
  }
  return out;
}

inline std::vector<float> wiener(std::span<const float> img, const Shape& s, double noise) {
  const long c = s[0], h = s[1], w = s[2];
  std::vector<float> out(img.size());
  for (long ch = 0; ch < c; ++ch) {
    const auto p = pad_channel(img, h, w, ch, 1);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double mean = 0;
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx) mean += p.at(y + dy, x + dx);
        mean /= 9.0;
        double var = 0;
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx) {
            const double d = p.at(y + dy, x + dx) - mean;
            var += d * d;
          }
        var /= 9.0;
        const double gain = std::max(var - noise, 0.0) / std::max(var, noise);
        out[(ch * h + y) * w + x] = clip01(mean + gain * (p.at(y, x) - mean));
      }
  }
  return out;
}

// ---- metrics ----

inline double concordant_auroc(std::span<const double> scores, std::span<const int> labels) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1;
      if (scores[i] > scores[j]) num += 1;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  return num / pairs;
}

// Tries every observed score as threshold; keeps the largest one whose TPR
// (positives >= t) reaches `tpr`, and reports negatives strictly below it.
inline double brute_tnr(std::span<const double> scores, std::span<const int> labels, double tpr) {
  double pos = 0, neg = 0;
  for (const int l : labels) (l == 1 ? pos : neg) += 1;
  double best_t = -INFINITY;
  for (const double t : scores) {
    double hit = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (labels[i] == 1 && scores[i] >= t) hit += 1;
    if (hit / pos >= tpr && t > best_t) best_t = t;
  }
  double below = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i] == 0 && scores[i] < best_t) below += 1;
  return below / neg;
}

// ---- Mahalanobis ----

// max_c -(f - mu_c)^T inv(Sigma_c) (f - mu_c) through an explicit inverse.
inline double mahalanobis_score(const Eigen::MatrixXd& means,
                                const std::vector<Eigen::MatrixXd>& covs,
                                std::span<const double> f) {
  double best = -INFINITY;
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    const Eigen::MatrixXd inv = covs[covs.size() == 1 ? 0 : c].inverse();
    Eigen::VectorXd d(means.cols());
    for (Eigen::Index k = 0; k < means.cols(); ++k) d[k] = f[k] - means(c, k);
    best = std::max(best, -(d.transpose() * inv * d)(0, 0));
  }
  return best;
}

// ---- gradients ----

struct GradCheck {
  double max_rel_error = 0;
  std::size_t checked = 0;
};

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

// Compares backward() against central differences of sum(output * weights)
// for every parameter and every input element.
inline GradCheck check_gradients(Network<double>& net, const Tensor<double>& input,
                                 std::uint64_t seed, double h = 1e-4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  gendetect::autodiff::Tape<double> tape;
  const auto out0 = net.forward(input, &tape);
  Tensor<double> upstream(out0.shape());
  for (auto& v : upstream.data()) v = nd(rng);
  const auto grads = net.backward(tape, upstream, true);

  auto objective = [&](const Tensor<double>& x) {
    const auto out = net.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
    return s;
  };

  GradCheck res;
  auto compare = [&](double analytic, double numeric) {
    res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic, numeric));
    ++res.checked;
  };

  for (std::size_t b = 0; b < net.param_layer_count(); ++b) {
    for (int which = 0; which < 2; ++which) {
      const std::size_t n = which == 0 ? net.params()[b].weight.size() : net.params()[b].bias.size();
      for (std::size_t i = 0; i < n; ++i) {
        auto value = [&]() -> double& {
          auto& p = net.mutable_params()[b];
          return which == 0 ? p.weight[i] : p.bias[i];
        };
        const double orig = value();
        value() = orig + h;
        const double up = objective(input);
        value() = orig - h;
        const double down = objective(input);
        value() = orig;
        const auto& g = which == 0 ? grads.blocks[b].weight : grads.blocks[b].bias;
        compare(g[i], (up - down) / (2 * h));
      }
    }
  }
  Tensor<double> x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = objective(x);
    x[i] = orig - h;
    const double down = objective(x);
    x[i] = orig;
    compare((*grads.input)[i], (up - down) / (2 * h));
  }
  return res;
}

}  // namespace oracle
