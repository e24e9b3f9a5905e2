#pragma once

#include <memory>
#include <span>
#include <vector>

#include "detectors/logistic.hpp"
#include "transforms/transforms.hpp"

namespace gendetect::detectors {

using Net = autodiff::Network<float>;
using autodiff::Tensor;
using transforms::StreamTransform;
using transforms::TransformKind;

// A stream kind together with the hyperparameter values to search.
struct StreamCandidate {
  TransformKind kind = TransformKind::identity;
  std::vector<double> grid;  // ignored for identity and autoencoder
  std::shared_ptr<const Net> autoencoder;
};

// identity, gaussian, wiener, median and, when `ae` is set, autoencoder.
std::vector<StreamCandidate> default_candidates(std::shared_ptr<const Net> ae);

struct GitStream {
  StreamTransform transform;
  LogisticHead head;
  double val_auroc = 0;
};

struct GitDetector {
  std::vector<GitStream> streams;
  LogisticHead fusion;
  gradfeat::FeatureOptions features;

  std::vector<StreamTransform> transforms() const;
  // N x S matrix of per-stream head outputs.
  Matrix stream_probabilities(const Net& net, const Tensor<float>& images) const;
  Matrix fuse_input(const std::vector<Matrix>& features) const;
  std::vector<double> score_batch(const Net& net, const Tensor<float>& images) const;
  double score(const Net& net, std::span<const float> x0) const;
};

struct GitOptions {
  HeadOptions head;
  gradfeat::FeatureOptions features;
  bool require_identity = true;
};

// Each stream kind keeps the grid value whose head scores the best validation
// AUROC (first value on ties). The fusion head is then fit on the chosen
// streams' outputs over the training images.
GitDetector train_git(const Net& net, const std::vector<StreamCandidate>& candidates,
                      const Tensor<float>& train_images, std::span<const int> train_labels,
                      const Tensor<float>& val_images, std::span<const int> val_labels,
                      const GitOptions& opts = {});

// Keeps the given transforms and refits every stream head and the fusion head
// on (images, labels).
GitDetector refit_git(const Net& net, const std::vector<StreamTransform>& streams,
                      const Tensor<float>& images, std::span<const int> labels,
                      const GitOptions& opts = {});

// Single gaussian stream without identity stream.
GitDetector train_gran(const Net& net, const Tensor<float>& train_images,
                       std::span<const int> train_labels, const Tensor<float>& val_images,
                       std::span<const int> val_labels, const GitOptions& opts = {});

}  // namespace gendetect::detectors
