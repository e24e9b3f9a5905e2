#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "autodiff/loss.hpp"
#include "detectors/logistic.hpp"

namespace gendetect::detectors {

using Net = autodiff::Network<float>;
using autodiff::Tensor;

// x~ = clip(x - eps * sign(-grad_x CE(F(x), y)), 0, 1) with y the predicted
// class of x.
template <class T>
std::vector<T> odin_input_shift(const autodiff::Network<T>& net, std::span<const T> x, T eps) {
  std::vector<T> out(x.begin(), x.end());
  if (eps == T(0)) return out;
  autodiff::Tape<T> tape;
  const auto logits = net.forward(autodiff::as_batch(x, net.input_shape()), &tape);
  const std::size_t y[1] = {autodiff::argmax(logits.data())};
  const auto loss = autodiff::cross_entropy(logits, autodiff::one_hot<T>(y, logits.dim(1)));
  const auto grads = net.backward(tape, loss.grad, true);
  const auto g = grads.input->data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T neg = -g[i];
    const T sign = neg > T(0) ? T(1) : (neg < T(0) ? T(-1) : T(0));
    out[i] = std::clamp(out[i] - eps * sign, T(0), T(1));
  }
  return out;
}

// ---- GradNorm ----

// Per-layer L1 gradient norms of CE(F(x), uniform).
std::vector<double> gradnorm_features(const Net& net, std::span<const float> x);
// L1 norm of the last layer's gradient under the uniform target.
double gradnorm_last_layer(const Net& net, std::span<const float> x);

struct GradNormDetector {
  bool all_layers = false;
  LogisticHead head;  // all-layers mode only

  // Higher means more likely misclassified: the negated norm in last-layer
  // mode, the head output otherwise.
  std::vector<double> score_batch(const Net& net, const Tensor<float>& images) const;
};

Matrix gradnorm_feature_matrix(const Net& net, const Tensor<float>& images);
GradNormDetector train_gradnorm_all(const Net& net, const Tensor<float>& images,
                                    std::span<const int> labels, const HeadOptions& opts = {});

// ---- Mahalanobis ----

// Class-conditional Gaussians of one layer's features sharing a covariance
// (tied) or one covariance per class.
class LayerGaussian {
 public:
  LayerGaussian() = default;
  LayerGaussian(Eigen::MatrixXd means, std::vector<Eigen::MatrixXd> covariances);

  std::size_t num_classes() const { return static_cast<std::size_t>(means_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(means_.cols()); }
  const Eigen::MatrixXd& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const { return covs_; }
  bool tied() const { return covs_.size() == 1; }

  // max over classes of -(f - mu_c)^T Sigma^-1 (f - mu_c); always <= 0.
  double score(std::span<const double> f) const;

 private:
  Eigen::MatrixXd means_;
  std::vector<Eigen::MatrixXd> covs_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors_;
};

struct GaussianFitOptions {
  bool tied = true;
  double ridge_scale = 1e-3;  // ridge = ridge_scale * trace / dim
};

// Fits per-class means and covariance(s) to rows of `features`.
LayerGaussian fit_layer_gaussian(const Matrix& features, std::span<const std::size_t> classes,
                                 std::size_t num_classes, const GaussianFitOptions& opts = {});

// Spatial mean (per channel) of every parameterized layer's output, taken
// after its relu when one follows; raw logits for the output layer.
std::vector<std::vector<double>> layer_features(const Net& net, std::span<const float> x);

std::vector<double> mahalanobis_epsilon_grid();

struct MahalanobisDetector {
  std::vector<LayerGaussian> layers;
  double epsilon = 0;
  LogisticHead head;

  // Per-layer scores after the input shift, one row per image.
  Matrix layer_scores(const Net& net, const Tensor<float>& images, double eps) const;
  std::vector<double> score_batch(const Net& net, const Tensor<float>& images) const;
};

std::vector<LayerGaussian> fit_mahalanobis(const Net& net, const Tensor<float>& clean_images,
                                           std::span<const std::uint32_t> classes,
                                           std::size_t num_classes,
                                           const GaussianFitOptions& opts = {});

// Picks epsilon on validation AUROC and trains the head on setup data.
MahalanobisDetector train_mahalanobis(const Net& net, std::vector<LayerGaussian> layers,
                                      const Tensor<float>& train_images,
                                      std::span<const int> train_labels,
                                      const Tensor<float>& val_images,
                                      std::span<const int> val_labels,
                                      const HeadOptions& opts = {});

}  // namespace gendetect::detectors
