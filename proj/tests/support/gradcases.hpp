#pragma once

// Random finite-difference instances for every layer kind.

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

#include "support/oracles.hpp"

namespace oracle {

using gendetect::autodiff::LayerKind;
using gendetect::autodiff::LayerSpec;

struct LayerCase {
  std::string name;
  Shape input;
  std::vector<LayerSpec> layers;
  bool spaced_input = false;  // distinct, well separated inputs (relu, max-pool kinks)
};

inline std::vector<LayerCase> layer_cases() {
  return {
      {"dense", {5}, {LayerSpec::dense(5, 4)}},
      {"dense_nobias", {5}, {LayerSpec::dense(5, 3, false)}},
      {"conv2d", {2, 5, 5}, {LayerSpec::conv2d(2, 3, 3, 1, 1)}},
      {"conv2d_stride", {2, 6, 6}, {LayerSpec::conv2d(2, 2, 4, 2, 1)}},
      {"conv_transpose2d", {3, 3, 3}, {LayerSpec::conv_transpose2d(3, 2, 4, 2, 1)}},
      {"relu", {2, 3, 3}, {LayerSpec::relu()}, true},
      {"sigmoid", {2, 3, 3}, {LayerSpec::sigmoid()}},
      {"softmax", {6}, {LayerSpec::softmax()}},
      {"max_pool2d", {2, 4, 4}, {LayerSpec::max_pool2d(2)}, true},
      {"flatten", {2, 3, 3}, {LayerSpec::flatten()}},
      {"stack",
       {2, 6, 6},
       {LayerSpec::conv2d(2, 3, 3, 1, 1), LayerSpec::sigmoid(), LayerSpec::flatten(),
        LayerSpec::dense(108, 4), LayerSpec::softmax()}},
  };
}

inline Tensor<double> random_input(const LayerCase& c, std::size_t batch, std::mt19937_64& rng) {
  Shape shape = c.input;
  shape.insert(shape.begin(), batch);
  Tensor<double> x(shape);
  if (c.spaced_input) {
    // A shuffled grid with spacing 0.05 around zero keeps every kink far
    // from the finite-difference step.
    std::vector<double> v(x.size());
    std::iota(v.begin(), v.end(), 0.0);
    for (auto& e : v) e = (e - static_cast<double>(v.size()) / 2.0 + 0.5) * 0.05;
    std::shuffle(v.begin(), v.end(), rng);
    std::copy(v.begin(), v.end(), x.data().begin());
  } else {
    std::normal_distribution<double> nd;
    for (auto& e : x.data()) e = nd(rng);
  }
  return x;
}

// Max relative error per case over `instances` random networks and inputs.
inline std::map<std::string, double> run_gradient_cases(std::size_t instances, std::uint64_t seed) {
  std::map<std::string, double> worst;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (const auto& c : layer_cases()) {
    double w = 0;
    for (std::size_t k = 0; k < instances; ++k) {
      Network<double> net(c.input, c.layers);
      for (auto& b : net.mutable_params()) {
        for (auto& v : b.weight.data()) v = nd(rng);
        for (auto& v : b.bias.data()) v = nd(rng);
      }
      const auto x = random_input(c, 2, rng);
      w = std::max(w, check_gradients(net, x, rng()).max_rel_error);
    }
    worst[c.name] = w;
  }
  return worst;
}

}  // namespace oracle
