#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "autodiff/loss.hpp"
#include "autodiff/network.hpp"

namespace gendetect::perturb {

using autodiff::Network;
using autodiff::Tensor;

// Every attack returns an image in [0,1].

template <class T>
struct ForwardGrad {
  Tensor<T> logits;  // (1, C)
  std::vector<T> grad;
};

// Input gradient of CE(F(x), onehot(label)).
template <class T>
ForwardGrad<T> loss_input_gradient(const Network<T>& net, std::span<const T> x, std::size_t label) {
  autodiff::Tape<T> tape;
  auto logits = net.forward(autodiff::as_batch(x, net.input_shape()), &tape);
  const std::size_t y[1] = {label};
  const auto loss = autodiff::cross_entropy(logits, autodiff::one_hot<T>(y, logits.dim(1)));
  auto g = net.backward(tape, loss.grad, true);
  return {std::move(logits), std::move(g.input->storage())};
}

template <class T>
T sign_of(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

template <class T>
std::vector<T> fgsm(const Network<T>& net, std::span<const T> x, std::size_t label, T eps) {
  std::vector<T> out(x.begin(), x.end());
  if (eps == T(0)) return out;
  const auto g = loss_input_gradient(net, x, label).grad;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(out[i] + eps * sign_of(g[i]), T(0), T(1));
  return out;
}

// Iterative sign steps of size eps/steps, projected onto the eps-ball around
// x and onto [0,1] after each step.
template <class T>
std::vector<T> bim(const Network<T>& net, std::span<const T> x, std::size_t label, T eps,
                   std::size_t steps = 10) {
  std::vector<T> cur(x.begin(), x.end());
  if (eps == T(0) || steps == 0) return cur;
  const T alpha = eps / static_cast<T>(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto g = loss_input_gradient<T>(net, cur, label).grad;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const T v = std::clamp(cur[i] + alpha * sign_of(g[i]), x[i] - eps, x[i] + eps);
      cur[i] = std::clamp(v, T(0), T(1));
    }
  }
  return cur;
}

// Logits of x and the input gradient of every logit.
template <class T>
std::pair<std::vector<T>, std::vector<std::vector<T>>> logit_jacobian(const Network<T>& net,
                                                                      std::span<const T> x) {
  autodiff::Tape<T> tape;
  const auto logits = net.forward(autodiff::as_batch(x, net.input_shape()), &tape);
  const std::size_t c = logits.dim(1);
  std::vector<std::vector<T>> grads(c);
  for (std::size_t k = 0; k < c; ++k) {
    Tensor<T> e({1, c});
    e[k] = T(1);
    grads[k] = std::move(net.backward(tape, e, true).input->storage());
  }
  return {std::vector<T>(logits.data().begin(), logits.data().end()), std::move(grads)};
}

// One linearized DeepFool step away from class `source`: the smallest L2 move
// onto the nearest linearized boundary, ((|f'_k| + margin) / |w_k|^2) w_k.
template <class T>
std::vector<T> deepfool_linear_step(const Network<T>& net, std::span<const T> x,
                                    std::size_t source, double margin = 0.0) {
  const auto [z, g] = logit_jacobian(net, x);
  std::size_t best = source;
  double best_ratio = std::numeric_limits<double>::infinity(), best_norm2 = 0, best_f = 0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (k == source) continue;
    double n2 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(g[k][i]) - static_cast<double>(g[source][i]);
      n2 += d * d;
    }
    const double f = static_cast<double>(z[k]) - static_cast<double>(z[source]);
    const double ratio = std::abs(f) / std::max(std::sqrt(n2), 1e-30);
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = k;
      best_norm2 = std::max(n2, 1e-30);
      best_f = f;
    }
  }
  std::vector<T> r(x.size(), T(0));
  if (best == source) return r;
  const double scale = (std::abs(best_f) + margin) / best_norm2;
  for (std::size_t i = 0; i < x.size(); ++i)
    r[i] = static_cast<T>(scale * (static_cast<double>(g[best][i]) - static_cast<double>(g[source][i])));
  return r;
}

template <class T>
struct DeepFoolResult {
  std::vector<T> image;
  std::size_t iterations = 0;
  bool converged = false;
};

// Moves x away from class `label` until the prediction changes. Each step
// aims 1e-4 past the linearized boundary so curved boundaries are crossed in
// finitely many steps. If x is not predicted as `label` it is returned unchanged.
template <class T>
DeepFoolResult<T> deepfool(const Network<T>& net, std::span<const T> x, std::size_t label,
                           std::size_t max_iter = 50, T overshoot = T(0.02)) {
  DeepFoolResult<T> res{std::vector<T>(x.begin(), x.end()), 0, false};
  std::vector<double> total(x.size(), 0.0);
  auto predicted = [&](const std::vector<T>& img) {
    return autodiff::argmax<T>(net.forward(autodiff::as_batch<T>(img, net.input_shape())).data());
  };
  while (predicted(res.image) == label) {
    if (res.iterations == max_iter) return res;
    const auto r = deepfool_linear_step<T>(net, res.image, label, 1e-4);
    for (std::size_t i = 0; i < x.size(); ++i) {
      total[i] += static_cast<double>(r[i]);
      const double v = static_cast<double>(x[i]) + (1.0 + static_cast<double>(overshoot)) * total[i];
      res.image[i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
    }
    ++res.iterations;
  }
  res.converged = true;
  return res;
}

template <class T>
struct CwResult {
  std::vector<T> image;
  bool success = false;
};

// Carlini-Wagner L2 with x' = (tanh(w) + 1) / 2, minimizing
// |x' - x|^2 + c * max(Z_label - max_{i != label} Z_i, 0) by plain gradient
// descent on w. Returns the smallest successful iterate, or the lowest
// objective seen (starting from x itself) if none succeeds.
template <class T>
CwResult<T> cwl2(const Network<T>& net, std::span<const T> x, std::size_t label, T c,
                 T lr = T(0.01), std::size_t iters = 200) {
  const std::size_t n = x.size();
  const double lim = 1.0 - 1e-6;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = std::atanh(std::clamp(2.0 * static_cast<double>(x[i]) - 1.0, -lim, lim));

  CwResult<T> best{std::vector<T>(x.begin(), x.end()), false};
  double best_l2 = std::numeric_limits<double>::infinity();
  double best_obj = std::numeric_limits<double>::infinity();

  auto margin_of = [&](std::span<const T> z) {
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < z.size(); ++k)
      if (k != label) other = std::max(other, static_cast<double>(z[k]));
    return static_cast<double>(z[label]) - other;
  };
  auto consider = [&](const std::vector<T>& img, std::span<const T> z, double l2) {
    const bool success = autodiff::argmax(z) != label;
    if (success) {
      if (!best.success || l2 < best_l2) {
        best = {img, true};
        best_l2 = l2;
      }
    } else if (!best.success) {
      const double obj = l2 + static_cast<double>(c) * std::max(margin_of(z), 0.0);
      if (obj < best_obj) {
        best = {img, false};
        best_obj = obj;
      }
    }
  };

  {
    const auto z = net.forward(autodiff::as_batch(x, net.input_shape()));
    consider(best.image, z.data(), 0.0);
  }
  std::vector<T> img(n);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) img[i] = static_cast<T>((std::tanh(w[i]) + 1.0) / 2.0);
    autodiff::Tape<T> tape;
    const auto z = net.forward(autodiff::as_batch<T>(img, net.input_shape()), &tape);
    double l2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(img[i]) - static_cast<double>(x[i]);
      l2 += d * d;
    }
    if (it > 0) consider(img, z.data(), l2);
    // d objective / d x'
    std::vector<double> gx(n);
    for (std::size_t i = 0; i < n; ++i)
      gx[i] = 2.0 * (static_cast<double>(img[i]) - static_cast<double>(x[i]));
    if (c != T(0) && margin_of(z.data()) > 0.0) {
      std::size_t other = label == 0 ? 1 : 0;
      for (std::size_t k = 0; k < z.dim(1); ++k)
        if (k != label && z[k] > z[other]) other = k;
      Tensor<T> e({1, z.dim(1)});
      e[label] = c;
      e[other] = -c;
      const auto gi = net.backward(tape, e, true).input->data();
      for (std::size_t i = 0; i < n; ++i) gx[i] += static_cast<double>(gi[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double t = std::tanh(w[i]);
      w[i] -= static_cast<double>(lr) * gx[i] * (1.0 - t * t) / 2.0;
    }
  }
  return best;
}

}  // namespace gendetect::perturb
