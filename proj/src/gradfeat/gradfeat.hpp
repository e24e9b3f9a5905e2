#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "autodiff/loss.hpp"
#include "autodiff/network.hpp"
#include "transforms/transforms.hpp"

namespace gendetect::gradfeat {

using autodiff::Network;
using autodiff::Shape;
using autodiff::Tensor;

struct FeatureOptions {
  // Divide each layer's L1 norm by its parameter count.
  bool per_parameter_mean = false;
};

struct GradientFeatures {
  std::string stream;
  std::vector<double> values;  // one entry per parameterized layer
};

template <class T>
struct OneHot {
  std::size_t label = 0;
  Tensor<T> vector;  // (1, C)
};

template <class T>
OneHot<T> predicted_onehot(const Network<T>& net, std::span<const T> x0) {
  const auto logits = net.forward(autodiff::as_batch(x0, net.input_shape()));
  const std::size_t y = autodiff::argmax(logits.data());
  const std::size_t labels[1] = {y};
  return {y, autodiff::one_hot<T>(labels, logits.dim(1))};
}

// Per-layer L1 norms (weights and bias together) of the gradient of
// loss_scale * CE(F(x), target). `target` is a (1, C) probability row.
template <class T>
std::vector<double> layer_gradient_norms(const Network<T>& net, std::span<const T> x,
                                         const Tensor<T>& target, T loss_scale = T(1),
                                         const FeatureOptions& opts = {}) {
  autodiff::Tape<T> tape;
  const auto logits = net.forward(autodiff::as_batch(x, net.input_shape()), &tape);
  auto loss = autodiff::cross_entropy(logits, target);
  if (loss_scale != T(1))
    for (auto& g : loss.grad.data()) g *= loss_scale;
  const auto grads = net.backward(tape, loss.grad);
  std::vector<double> norms(grads.blocks.size());
  for (std::size_t l = 0; l < grads.blocks.size(); ++l) {
    double s = 0;
    for (const T v : grads.blocks[l].weight.data()) s += std::abs(static_cast<double>(v));
    for (const T v : grads.blocks[l].bias.data()) s += std::abs(static_cast<double>(v));
    if (opts.per_parameter_mean) s /= static_cast<double>(grads.blocks[l].parameter_count());
    norms[l] = s;
  }
  return norms;
}

using Net = Network<float>;

GradientFeatures extract_gradient_features(const Net& net, std::span<const float> x0,
                                           const transforms::StreamTransform& stream,
                                           const FeatureOptions& opts = {});

// The prediction y is computed once from x0 and shared by every stream.
std::vector<GradientFeatures> extract_all_streams(
    const Net& net, std::span<const float> x0,
    const std::vector<transforms::StreamTransform>& streams, const FeatureOptions& opts = {});

// Row-major N x L feature matrix for one stream over a whole image batch.
struct FeatureMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * cols, cols);
  }
};

// Features of every stream for every image of an (N,C,H,W) batch, computed in
// parallel over samples. Result is indexed [stream].
std::vector<FeatureMatrix> extract_batch(const Net& net, const Tensor<float>& images,
                                         const std::vector<transforms::StreamTransform>& streams,
                                         const FeatureOptions& opts = {});

// Text dump, one line per (sample, stream): "sample stream f_1 ... f_L".
void write_feature_dump(const std::filesystem::path& path,
                        const std::vector<transforms::StreamTransform>& streams,
                        const std::vector<FeatureMatrix>& features);

}  // namespace gendetect::gradfeat
