#include "autodiff/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace gendetect::autodiff {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;             // column side

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// Unfolds patches of an image (C,H,W) into a (C*K*K, OH*OW) matrix.
template <class T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = image + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? T(0)
                                                                   : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into an image (C,H,W).
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* image) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          T* dst = image + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
            if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
            dst[static_cast<std::size_t>(iw)] += src[ow];
          }
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const LayerSpec& spec, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], spec.kernel, spec.stride, spec.padding, out[1], out[2]};
}

// A transposed convolution is the adjoint of the convolution that maps its
// output back onto its input grid.
ConvGeometry transpose_geometry(const LayerSpec& spec, const Shape& in, const Shape& out) {
  return {out[0], out[1], out[2], spec.kernel, spec.stride, spec.padding, in[1], in[2]};
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

Shape batch_shape(std::size_t n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

template <class T>
Tensor<T> layer_forward(const LayerSpec& spec, const ParamBlock<T>* p, const Tensor<T>& x,
                        const Shape& in, const Shape& out, std::vector<std::uint32_t>* argmax) {
  const std::size_t n = x.dim(0);
  Tensor<T> y(batch_shape(n, out));
  const std::size_t in_size = shape_volume(in), out_size = shape_volume(out);

  switch (spec.kind) {
    case LayerKind::dense: {
      Eigen::Map<const MatR<T>> w(p->weight.data().data(), spec.out_features, spec.in_features);
      for (std::size_t s = 0; s < n; ++s) {
        Eigen::Map<const Vec<T>> xs(x.data().data() + s * in_size, in_size);
        Eigen::Map<Vec<T>> ys(y.data().data() + s * out_size, out_size);
        ys.noalias() = w * xs;
        if (!p->bias.empty()) ys += Eigen::Map<const Vec<T>>(p->bias.data().data(), out_size);
      }
      break;
    }
    case LayerKind::conv2d: {
      const ConvGeometry g = conv_geometry(spec, in, out);
      std::vector<T> cols(g.rows() * g.cols());
      Eigen::Map<const MatR<T>> w(p->weight.data().data(), spec.out_channels, g.rows());
      Eigen::Map<const MatR<T>> c(cols.data(), g.rows(), g.cols());
      for (std::size_t s = 0; s < n; ++s) {
        im2col(x.data().data() + s * in_size, g, cols.data());
        Eigen::Map<MatR<T>> ys(y.data().data() + s * out_size, spec.out_channels, g.cols());
        ys.noalias() = w * c;
        if (!p->bias.empty())
          ys.colwise() += Eigen::Map<const Vec<T>>(p->bias.data().data(), spec.out_channels);
      }
      break;
    }
    case LayerKind::conv_transpose2d: {
      const ConvGeometry g = transpose_geometry(spec, in, out);
      std::vector<T> cols(g.rows() * g.cols());
      Eigen::Map<const MatR<T>> w(p->weight.data().data(), spec.in_channels, g.rows());
      Eigen::Map<MatR<T>> c(cols.data(), g.rows(), g.cols());
      const std::size_t plane = out[1] * out[2];
      for (std::size_t s = 0; s < n; ++s) {
        Eigen::Map<const MatR<T>> xs(x.data().data() + s * in_size, spec.in_channels, g.cols());
        c.noalias() = w.transpose() * xs;
        T* ys = y.data().data() + s * out_size;
        col2im(cols.data(), g, ys);
        if (!p->bias.empty())
          for (std::size_t oc = 0; oc < spec.out_channels; ++oc)
            for (std::size_t i = 0; i < plane; ++i) ys[oc * plane + i] += p->bias[oc];
      }
      break;
    }
    case LayerKind::max_pool2d: {
      argmax->assign(y.size(), 0);
      const std::size_t oh_n = out[1], ow_n = out[2], h = in[1], w = in[2];
      for (std::size_t s = 0; s < n; ++s) {
        const T* xs = x.data().data() + s * in_size;
        for (std::size_t c = 0; c < in[0]; ++c)
          for (std::size_t oh = 0; oh < oh_n; ++oh)
            for (std::size_t ow = 0; ow < ow_n; ++ow) {
              std::size_t best = (c * h + oh * spec.stride) * w + ow * spec.stride;
              for (std::size_t ki = 0; ki < spec.kernel; ++ki)
                for (std::size_t kj = 0; kj < spec.kernel; ++kj) {
                  const std::size_t idx = (c * h + oh * spec.stride + ki) * w + ow * spec.stride + kj;
                  if (xs[idx] > xs[best]) best = idx;
                }
              const std::size_t o = s * out_size + (c * oh_n + oh) * ow_n + ow;
              y[o] = xs[best];
              (*argmax)[o] = static_cast<std::uint32_t>(best);
            }
      }
      break;
    }
    case LayerKind::relu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case LayerKind::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_sigmoid(x[i]);
      break;
    case LayerKind::softmax:
      for (std::size_t s = 0; s < n; ++s) {
        const T* xs = x.data().data() + s * in_size;
        T* ys = y.data().data() + s * out_size;
        const T m = *std::max_element(xs, xs + in_size);
        T sum = 0;
        for (std::size_t i = 0; i < in_size; ++i) sum += (ys[i] = std::exp(xs[i] - m));
        for (std::size_t i = 0; i < in_size; ++i) ys[i] /= sum;
      }
      break;
    case LayerKind::flatten:
      std::copy(x.data().begin(), x.data().end(), y.data().begin());
      break;
  }
  return y;
}

template <class T>
Tensor<T> layer_backward(const LayerSpec& spec, const ParamBlock<T>* p, ParamBlock<T>* grad,
                         const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                         const Shape& in, const Shape& out,
                         const std::vector<std::uint32_t>& argmax, bool need_dx) {
  const std::size_t n = x.dim(0);
  const std::size_t in_size = shape_volume(in), out_size = shape_volume(out);
  Tensor<T> dx;
  if (need_dx) dx = Tensor<T>(x.shape());

  switch (spec.kind) {
    case LayerKind::dense: {
      Eigen::Map<const MatR<T>> w(p->weight.data().data(), spec.out_features, spec.in_features);
      Eigen::Map<MatR<T>> dw(grad->weight.data().data(), spec.out_features, spec.in_features);
      for (std::size_t s = 0; s < n; ++s) {
        Eigen::Map<const Vec<T>> xs(x.data().data() + s * in_size, in_size);
        Eigen::Map<const Vec<T>> dys(dy.data().data() + s * out_size, out_size);
        dw.noalias() += dys * xs.transpose();
        if (!grad->bias.empty()) Eigen::Map<Vec<T>>(grad->bias.data().data(), out_size) += dys;
        if (need_dx) Eigen::Map<Vec<T>>(dx.data().data() + s * in_size, in_size).noalias() = w.transpose() * dys;
      }
      break;
    }
    case LayerKind::conv2d: {
      const ConvGeometry g = conv_geometry(spec, in, out);
      std::vector<T> cols(g.rows() * g.cols());
      std::vector<T> dcols(need_dx ? g.rows() * g.cols() : 0);
      Eigen::Map<const MatR<T>> w(p->weight.data().data(), spec.out_channels, g.rows());
      Eigen::Map<MatR<T>> dw(grad->weight.data().data(), spec.out_channels, g.rows());
      Eigen::Map<const MatR<T>> c(cols.data(), g.rows(), g.cols());
      for (std::size_t s = 0; s < n; ++s) {
        im2col(x.data().data() + s * in_size, g, cols.data());
        Eigen::Map<const MatR<T>> dys(dy.data().data() + s * out_size, spec.out_channels, g.cols());
        dw.noalias() += dys * c.transpose();
        if (!grad->bias.empty())
          Eigen::Map<Vec<T>>(grad->bias.data().data(), spec.out_channels) += dys.rowwise().sum();
        if (need_dx) {
          Eigen::Map<MatR<T>> dc(dcols.data(), g.rows(), g.cols());
          dc.noalias() = w.transpose() * dys;
          col2im(dcols.data(), g, dx.data().data() + s * in_size);
        }
      }
      break;
    }
    case LayerKind::conv_transpose2d: {
      const ConvGeometry g = transpose_geometry(spec, in, out);
      std::vector<T> cols(g.rows() * g.cols());
      Eigen::Map<const MatR<T>> w(p->weight.data().data(), spec.in_channels, g.rows());
      Eigen::Map<MatR<T>> dw(grad->weight.data().data(), spec.in_channels, g.rows());
      Eigen::Map<const MatR<T>> c(cols.data(), g.rows(), g.cols());
      const std::size_t plane = out[1] * out[2];
      for (std::size_t s = 0; s < n; ++s) {
        const T* dys = dy.data().data() + s * out_size;
        im2col(dys, g, cols.data());
        Eigen::Map<const MatR<T>> xs(x.data().data() + s * in_size, spec.in_channels, g.cols());
        dw.noalias() += xs * c.transpose();
        if (!grad->bias.empty())
          for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += dys[oc * plane + i];
            grad->bias[oc] += acc;
          }
        if (need_dx)
          Eigen::Map<MatR<T>>(dx.data().data() + s * in_size, spec.in_channels, g.cols())
              .noalias() = w * c;
      }
      break;
    }
    case LayerKind::max_pool2d:
      if (need_dx)
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t o = 0; o < out_size; ++o) {
            const std::size_t idx = s * out_size + o;
            dx[s * in_size + argmax[idx]] += dy[idx];
          }
      break;
    case LayerKind::relu:
      if (need_dx)
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
      break;
    case LayerKind::sigmoid:
      if (need_dx)
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
      break;
    case LayerKind::softmax:
      if (need_dx)
        for (std::size_t s = 0; s < n; ++s) {
          const T* ys = y.data().data() + s * out_size;
          const T* dys = dy.data().data() + s * out_size;
          T dot = 0;
          for (std::size_t i = 0; i < out_size; ++i) dot += dys[i] * ys[i];
          for (std::size_t i = 0; i < out_size; ++i) dx[s * in_size + i] = ys[i] * (dys[i] - dot);
        }
      break;
    case LayerKind::flatten:
      if (need_dx) std::copy(dy.data().begin(), dy.data().end(), dx.data().begin());
      break;
  }
  return dx;
}

}  // namespace

template <class T>
void GradientSet<T>::accumulate(const GradientSet& other) {
  require(other.blocks.size() == blocks.size(), ErrorCode::shape,
          "gradient sets have different block counts");
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    auto& a = blocks[l];
    const auto& b = other.blocks[l];
    require(a.weight.shape() == b.weight.shape() && a.bias.size() == b.bias.size(),
            ErrorCode::shape, "gradient block shapes differ");
    for (std::size_t i = 0; i < a.weight.size(); ++i) a.weight[i] += b.weight[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
  }
}

template <class T>
void GradientSet<T>::scale(T factor) {
  for (auto& b : blocks) {
    for (auto& v : b.weight.storage()) v *= factor;
    for (auto& v : b.bias.storage()) v *= factor;
  }
  if (input)
    for (auto& v : input->storage()) v *= factor;
}

template <class T>
std::uint64_t Network<T>::next_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

template <class T>
Network<T>::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), id_(next_id()) {
  require(!input_shape_.empty(), ErrorCode::shape, "network input shape is empty");
  require(!layers_.empty(), ErrorCode::shape, "network has no layers");
  shapes_.push_back(input_shape_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& spec = layers_[i];
    shapes_.push_back(spec.infer_output(shapes_.back()));
    if (spec.has_weights()) {
      param_index_.push_back(static_cast<int>(params_.size()));
      param_layers_.push_back(i);
      ParamBlock<T> block;
      block.weight = Tensor<T>(spec.weight_shape());
      if (spec.bias) block.bias = Tensor<T>(spec.bias_shape());
      params_.push_back(std::move(block));
    } else {
      param_index_.push_back(-1);
    }
  }
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.parameter_count();
  return n;
}

template <class T>
GradientSet<T> Network<T>::zero_gradients() const {
  GradientSet<T> g;
  g.blocks.reserve(params_.size());
  for (const auto& p : params_) {
    ParamBlock<T> z;
    z.weight = Tensor<T>(p.weight.shape());
    if (!p.bias.empty()) z.bias = Tensor<T>(p.bias.shape());
    g.blocks.push_back(std::move(z));
  }
  return g;
}

template <class T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch, Tape<T>* tape) const {
  const Shape& s = batch.shape();
  require(s.size() == input_shape_.size() + 1 &&
              std::equal(input_shape_.begin(), input_shape_.end(), s.begin() + 1),
          ErrorCode::shape,
          "input batch " + shape_string(s) + " does not match network input " +
              shape_string(input_shape_) + " (expected a leading batch axis)");

  if (tape) {
    tape->network_id = id_;
    tape->network_version = version_;
    tape->inputs.assign(layers_.size(), {});
    tape->outputs.assign(layers_.size(), {});
    tape->pool_argmax.assign(layers_.size(), {});
  }
  Tensor<T> current = batch;
  std::vector<std::uint32_t> scratch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const int pi = param_index_[i];
    const ParamBlock<T>* p = pi >= 0 ? &params_[static_cast<std::size_t>(pi)] : nullptr;
    auto* argmax = tape ? &tape->pool_argmax[i] : &scratch;
    Tensor<T> next = layer_forward(layers_[i], p, current, shapes_[i], shapes_[i + 1], argmax);
    if (tape) {
      tape->inputs[i] = std::move(current);
      tape->outputs[i] = next;
    }
    current = std::move(next);
  }
  return current;
}

template <class T>
GradientSet<T> Network<T>::backward(const Tape<T>& tape, const Tensor<T>& grad_output,
                                    bool want_input_grad) const {
  require(tape.valid(), ErrorCode::state, "backward called without a recorded tape");
  require(tape.network_id == id_, ErrorCode::state, "tape was recorded on a different network");
  require(tape.network_version == version_, ErrorCode::state,
          "stale tape: network weights changed after the forward pass");
  require(tape.outputs.size() == layers_.size(), ErrorCode::state, "tape is incomplete");
  require(grad_output.shape() == tape.outputs.back().shape(), ErrorCode::shape,
          "output gradient " + shape_string(grad_output.shape()) + " does not match output " +
              shape_string(tape.outputs.back().shape()));

  GradientSet<T> grads = zero_gradients();
  // Earliest layer whose input gradient is needed.
  std::size_t stop = 0;
  if (!want_input_grad) {
    stop = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].has_weights()) {
        stop = i;
        break;
      }
  }

  Tensor<T> upstream = grad_output;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const int pi = param_index_[k];
    const ParamBlock<T>* p = pi >= 0 ? &params_[static_cast<std::size_t>(pi)] : nullptr;
    ParamBlock<T>* g = pi >= 0 ? &grads.blocks[static_cast<std::size_t>(pi)] : nullptr;
    const bool need_dx = want_input_grad || k > stop;
    upstream = layer_backward(layers_[k], p, g, tape.inputs[k], tape.outputs[k], upstream,
                              shapes_[k], shapes_[k + 1], tape.pool_argmax[k], need_dx);
    if (k <= stop && !want_input_grad) break;
  }
  if (want_input_grad) grads.input = std::move(upstream);
  return grads;
}

template class Network<float>;
template class Network<double>;
template struct GradientSet<float>;
template struct GradientSet<double>;

}  // namespace gendetect::autodiff
