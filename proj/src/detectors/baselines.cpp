#include "detectors/baselines.hpp"

#include "common/log.hpp"
#include "common/parallel.hpp"
#include "eval/metrics.hpp"
#include "gradfeat/gradfeat.hpp"

namespace gendetect::detectors {

std::vector<double> gradnorm_features(const Net& net, std::span<const float> x) {
  const std::size_t c = net.output_shape().back();
  return gradfeat::layer_gradient_norms<float>(net, x, autodiff::uniform_target<float>(1, c));
}

double gradnorm_last_layer(const Net& net, std::span<const float> x) {
  return gradnorm_features(net, x).back();
}

Matrix gradnorm_feature_matrix(const Net& net, const Tensor<float>& images) {
  const std::size_t n = images.dim(0), L = net.param_layer_count();
  Matrix m = make_matrix(n, L);
  parallel_for(n, [&](std::size_t i) {
    const auto f = gradnorm_features(net, images.sample(i));
    std::copy(f.begin(), f.end(), m.values.begin() + i * L);
  });
  return m;
}

std::vector<double> GradNormDetector::score_batch(const Net& net,
                                                  const Tensor<float>& images) const {
  const Matrix f = gradnorm_feature_matrix(net, images);
  if (all_layers) return head.predict_all(f);
  std::vector<double> s(f.rows);
  for (std::size_t i = 0; i < f.rows; ++i) s[i] = -f.row(i).back();
  return s;
}

GradNormDetector train_gradnorm_all(const Net& net, const Tensor<float>& images,
                                    std::span<const int> labels, const HeadOptions& opts) {
  return {true, train_logistic_head(gradnorm_feature_matrix(net, images), labels, opts)};
}

LayerGaussian::LayerGaussian(Eigen::MatrixXd means, std::vector<Eigen::MatrixXd> covariances)
    : means_(std::move(means)), covs_(std::move(covariances)) {
  require(means_.rows() > 0 && means_.cols() > 0, ErrorCode::invalid_argument,
          "Gaussian model needs at least one class and feature");
  require(covs_.size() == 1 || covs_.size() == static_cast<std::size_t>(means_.rows()),
          ErrorCode::invalid_argument, "need one tied covariance or one per class");
  for (const auto& c : covs_) {
    require(c.rows() == means_.cols() && c.cols() == means_.cols(), ErrorCode::shape,
            "covariance shape does not match feature dimension");
    factors_.emplace_back(c);
    require(factors_.back().info() == Eigen::Success, ErrorCode::numeric,
            "covariance is singular or not positive definite");
  }
}

double LayerGaussian::score(std::span<const double> f) const {
  require(f.size() == dim(), ErrorCode::shape, "feature dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> v(f.data(), static_cast<Eigen::Index>(f.size()));
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < means_.rows(); ++c) {
    const Eigen::VectorXd d = v - means_.row(c).transpose();
    const auto& llt = factors_[tied() ? 0 : static_cast<std::size_t>(c)];
    best = std::max(best, -d.dot(llt.solve(d)));
  }
  return best;
}

LayerGaussian fit_layer_gaussian(const Matrix& features, std::span<const std::size_t> classes,
                                 std::size_t num_classes, const GaussianFitOptions& opts) {
  require(features.rows == classes.size(), ErrorCode::invalid_argument,
          "feature rows and class labels differ in count");
  const auto D = static_cast<Eigen::Index>(features.cols);
  const auto C = static_cast<Eigen::Index>(num_classes);
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(C, D);
  std::vector<double> counts(num_classes, 0.0);
  for (std::size_t i = 0; i < features.rows; ++i) {
    require(classes[i] < num_classes, ErrorCode::invalid_argument, "class index out of range");
    const Eigen::Map<const Eigen::RowVectorXd> f(features.row(i).data(), D);
    means.row(static_cast<Eigen::Index>(classes[i])) += f;
    counts[classes[i]] += 1;
  }
  for (Eigen::Index c = 0; c < C; ++c) {
    require(counts[static_cast<std::size_t>(c)] > 0, ErrorCode::invalid_argument,
            "class " + std::to_string(c) + " has no samples for the Gaussian fit");
    means.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  std::vector<Eigen::MatrixXd> covs(opts.tied ? 1 : num_classes, Eigen::MatrixXd::Zero(D, D));
  for (std::size_t i = 0; i < features.rows; ++i) {
    const Eigen::Map<const Eigen::VectorXd> f(features.row(i).data(), D);
    const Eigen::VectorXd d = f - means.row(static_cast<Eigen::Index>(classes[i])).transpose();
    covs[opts.tied ? 0 : classes[i]] += d * d.transpose();
  }
  for (std::size_t k = 0; k < covs.size(); ++k) {
    covs[k] /= opts.tied ? static_cast<double>(features.rows) : counts[k];
    const double ridge = opts.ridge_scale * covs[k].trace() / static_cast<double>(D);
    covs[k] += ridge * Eigen::MatrixXd::Identity(D, D);
  }
  return LayerGaussian(std::move(means), std::move(covs));
}

std::vector<std::vector<double>> layer_features(const Net& net, std::span<const float> x) {
  autodiff::Tape<float> tape;
  net.forward(autodiff::as_batch(x, net.input_shape()), &tape);
  const auto& layers = net.layers();
  std::vector<std::vector<double>> out;
  for (std::size_t b = 0; b < net.param_layer_count(); ++b) {
    std::size_t li = net.param_layer(b);
    if (li + 1 < layers.size() && layers[li + 1].kind == autodiff::LayerKind::relu) ++li;
    const auto& act = tape.outputs[li];
    const autodiff::Shape& s = net.shape_at(li + 1);
    const std::size_t channels = s[0];
    const std::size_t spatial = act.size() / channels;
    std::vector<double> f(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum = 0;
      for (std::size_t k = 0; k < spatial; ++k) sum += act[c * spatial + k];
      f[c] = sum / static_cast<double>(spatial);
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<double> mahalanobis_epsilon_grid() {
  return {0.0, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.05, 0.1};
}

std::vector<LayerGaussian> fit_mahalanobis(const Net& net, const Tensor<float>& clean_images,
                                           std::span<const std::uint32_t> classes,
                                           std::size_t num_classes,
                                           const GaussianFitOptions& opts) {
  const std::size_t n = clean_images.dim(0), L = net.param_layer_count();
  require(classes.size() == n, ErrorCode::invalid_argument, "image and label counts differ");
  std::vector<std::vector<std::vector<double>>> feats(n);
  parallel_for(n, [&](std::size_t i) { feats[i] = layer_features(net, clean_images.sample(i)); });
  std::vector<std::size_t> cls(classes.begin(), classes.end());
  std::vector<LayerGaussian> layers;
  for (std::size_t l = 0; l < L; ++l) {
    Matrix m = make_matrix(n, feats.empty() ? 0 : feats[0][l].size());
    for (std::size_t i = 0; i < n; ++i)
      std::copy(feats[i][l].begin(), feats[i][l].end(), m.values.begin() + i * m.cols);
    layers.push_back(fit_layer_gaussian(m, cls, num_classes, opts));
  }
  return layers;
}

Matrix MahalanobisDetector::layer_scores(const Net& net, const Tensor<float>& images,
                                         double eps) const {
  const std::size_t n = images.dim(0), L = layers.size();
  require(L == net.param_layer_count(), ErrorCode::state,
          "Mahalanobis model does not match the classifier");
  Matrix m = make_matrix(n, L);
  parallel_for(n, [&](std::size_t i) {
    const auto shifted = odin_input_shift<float>(net, images.sample(i), static_cast<float>(eps));
    const auto f = layer_features(net, shifted);
    for (std::size_t l = 0; l < L; ++l) m.values[i * L + l] = layers[l].score(f[l]);
  });
  return m;
}

std::vector<double> MahalanobisDetector::score_batch(const Net& net,
                                                     const Tensor<float>& images) const {
  return head.predict_all(layer_scores(net, images, epsilon));
}

MahalanobisDetector train_mahalanobis(const Net& net, std::vector<LayerGaussian> layers,
                                      const Tensor<float>& train_images,
                                      std::span<const int> train_labels,
                                      const Tensor<float>& val_images,
                                      std::span<const int> val_labels,
                                      const HeadOptions& opts) {
  MahalanobisDetector det{std::move(layers), 0.0, {}};
  double best = -1;
  for (const double eps : mahalanobis_epsilon_grid()) {
    auto head = train_logistic_head(det.layer_scores(net, train_images, eps), train_labels, opts);
    const double a = eval::auroc(head.predict_all(det.layer_scores(net, val_images, eps)),
                                 val_labels);
    log::debug("Mahalanobis: eps " + std::to_string(eps) + " val AUROC " + std::to_string(a));
    if (a > best) {
      best = a;
      det.epsilon = eps;
      det.head = std::move(head);
    }
  }
  return det;
}

}  // namespace gendetect::detectors
