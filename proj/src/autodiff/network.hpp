#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "autodiff/layer.hpp"
#include "autodiff/tensor.hpp"

namespace gendetect::autodiff {

// Trainable block of one parameterized layer. `bias` is empty for bias-free
// layers.
template <class T>
struct ParamBlock {
  Tensor<T> weight;
  Tensor<T> bias;

  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

// Gradients w.r.t. every parameter block (same order and shapes as
// Network::params()) and optionally w.r.t. the input batch.
template <class T>
struct GradientSet {
  std::vector<ParamBlock<T>> blocks;
  std::optional<Tensor<T>> input;

  // Adds `other` element-wise; shapes must match.
  void accumulate(const GradientSet& other);
  void scale(T factor);
};

// Activations retained by a recording forward pass.
template <class T>
struct Tape {
  std::uint64_t network_id = 0;
  std::uint64_t network_version = 0;
  std::vector<Tensor<T>> inputs;        // input of every layer
  std::vector<Tensor<T>> outputs;       // output of every layer
  std::vector<std::vector<std::uint32_t>> pool_argmax;  // per layer, empty unless max_pool2d

  bool valid() const { return network_id != 0; }
};

// Sequential network with per-sample input shape. Forward and backward are
// const: a frozen network can be shared by many workers, each with its own
// tape. Any write access to parameters bumps the version so old tapes are
// rejected.
template <class T>
class Network {
 public:
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return shapes_.back(); }
  // Per-sample shape entering layer i (i == layers().size() gives the output).
  const Shape& shape_at(std::size_t i) const { return shapes_.at(i); }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }

  // Number of parameterized layers L.
  std::size_t param_layer_count() const noexcept { return params_.size(); }
  std::size_t parameter_count() const;
  // Index into params() for layer i, or -1.
  int param_index(std::size_t layer) const { return param_index_.at(layer); }
  // Layer index of parameter block l.
  std::size_t param_layer(std::size_t block) const { return param_layers_.at(block); }

  const std::vector<ParamBlock<T>>& params() const noexcept { return params_; }
  std::vector<ParamBlock<T>>& mutable_params() {
    ++version_;
    return params_;
  }

  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t version() const noexcept { return version_; }

  // Returns the output batch (pre-softmax logits for classifiers). Shape
  // mismatches are rejected before any compute. When `tape` is non-null it
  // receives everything backward() needs.
  Tensor<T> forward(const Tensor<T>& batch, Tape<T>* tape = nullptr) const;

  // Reverse pass for upstream gradient `grad_output` (same shape as the
  // forward output).
  GradientSet<T> backward(const Tape<T>& tape, const Tensor<T>& grad_output,
                          bool want_input_grad = false) const;

  GradientSet<T> zero_gradients() const;

  template <class U>
  Network<U> cast() const;

 private:
  static std::uint64_t next_id();

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<int> param_index_;
  std::vector<std::size_t> param_layers_;
  std::vector<ParamBlock<T>> params_;
  std::uint64_t id_;
  std::uint64_t version_ = 1;
};

template <class T>
template <class U>
Network<U> Network<T>::cast() const {
  Network<U> out(input_shape_, layers_);
  auto& dst = out.mutable_params();
  for (std::size_t l = 0; l < params_.size(); ++l) {
    dst[l].weight = params_[l].weight.template cast<U>();
    if (!params_[l].bias.empty()) dst[l].bias = params_[l].bias.template cast<U>();
  }
  return out;
}

extern template class Network<float>;
extern template class Network<double>;
extern template struct GradientSet<float>;
extern template struct GradientSet<double>;

}  // namespace gendetect::autodiff
