#include "detectors/git.hpp"

#include "common/log.hpp"
#include "eval/metrics.hpp"

namespace gendetect::detectors {

std::vector<StreamCandidate> default_candidates(std::shared_ptr<const Net> ae) {
  std::vector<StreamCandidate> c;
  c.push_back({TransformKind::identity, {}, nullptr});
  for (const auto k : {TransformKind::gaussian, TransformKind::wiener, TransformKind::median})
    c.push_back({k, transforms::default_grid(k), nullptr});
  if (ae) c.push_back({TransformKind::autoencoder, {}, std::move(ae)});
  return c;
}

std::vector<StreamTransform> GitDetector::transforms() const {
  std::vector<StreamTransform> t;
  for (const auto& s : streams) t.push_back(s.transform);
  return t;
}

Matrix GitDetector::fuse_input(const std::vector<Matrix>& features) const {
  require(features.size() == streams.size(), ErrorCode::internal, "stream count mismatch");
  const std::size_t n = features.empty() ? 0 : features[0].rows;
  Matrix probs = make_matrix(n, streams.size());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const auto p = streams[s].head.predict_all(features[s]);
    for (std::size_t i = 0; i < n; ++i) probs.values[i * streams.size() + s] = p[i];
  }
  return probs;
}

Matrix GitDetector::stream_probabilities(const Net& net, const Tensor<float>& images) const {
  require(!streams.empty(), ErrorCode::state, "detector has no streams");
  return fuse_input(gradfeat::extract_batch(net, images, transforms(), features));
}

std::vector<double> GitDetector::score_batch(const Net& net, const Tensor<float>& images) const {
  return fusion.predict_all(stream_probabilities(net, images));
}

double GitDetector::score(const Net& net, std::span<const float> x0) const {
  return score_batch(net, autodiff::as_batch(x0, net.input_shape())).front();
}

namespace {

std::vector<StreamTransform> expand(const StreamCandidate& c) {
  std::vector<StreamTransform> out;
  switch (c.kind) {
    case TransformKind::identity:
      out.push_back(StreamTransform::identity());
      break;
    case TransformKind::autoencoder:
      require(c.autoencoder != nullptr, ErrorCode::invalid_argument,
              "autoencoder stream needs a trained autoencoder");
      out.push_back(StreamTransform::autoencoder_stream(c.autoencoder));
      break;
    default:
      require(!c.grid.empty(), ErrorCode::invalid_argument,
              std::string("empty hyperparameter grid for ") + std::string(to_string(c.kind)));
      for (const double v : c.grid) out.push_back({c.kind, v, nullptr});
  }
  return out;
}

}  // namespace

GitDetector train_git(const Net& net, const std::vector<StreamCandidate>& candidates,
                      const Tensor<float>& train_images, std::span<const int> train_labels,
                      const Tensor<float>& val_images, std::span<const int> val_labels,
                      const GitOptions& opts) {
  require(!candidates.empty(), ErrorCode::invalid_argument, "GIT needs at least one stream");
  if (opts.require_identity) {
    bool has_identity = false;
    for (const auto& c : candidates) has_identity |= c.kind == TransformKind::identity;
    require(has_identity, ErrorCode::invalid_argument, "GIT requires an identity stream");
  }
  require(train_images.dim(0) == train_labels.size() && val_images.dim(0) == val_labels.size(),
          ErrorCode::invalid_argument, "image and label counts differ");

  std::vector<StreamTransform> all;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (const auto& c : candidates) {
    const auto e = expand(c);
    ranges.emplace_back(all.size(), all.size() + e.size());
    all.insert(all.end(), e.begin(), e.end());
  }
  log::info("GIT: extracting " + std::to_string(all.size()) + " candidate streams");
  const auto train_feats = gradfeat::extract_batch(net, train_images, all, opts.features);
  const auto val_feats = gradfeat::extract_batch(net, val_images, all, opts.features);

  GitDetector det;
  det.features = opts.features;
  std::vector<Matrix> chosen_train;
  for (const auto& [begin, end] : ranges) {
    GitStream best;
    std::size_t best_index = begin;
    for (std::size_t k = begin; k < end; ++k) {
      auto head = train_logistic_head(train_feats[k], train_labels, opts.head);
      const double a = eval::auroc(head.predict_all(val_feats[k]), val_labels);
      if (k == begin || a > best.val_auroc) {
        best = {all[k], std::move(head), a};
        best_index = k;
      }
    }
    log::info("GIT: stream " + best.transform.label() + " val AUROC " +
              std::to_string(best.val_auroc));
    det.streams.push_back(std::move(best));
    chosen_train.push_back(train_feats[best_index]);
  }
  det.fusion = train_logistic_head(det.fuse_input(chosen_train), train_labels, opts.head);
  return det;
}

GitDetector refit_git(const Net& net, const std::vector<StreamTransform>& streams,
                      const Tensor<float>& images, std::span<const int> labels,
                      const GitOptions& opts) {
  require(!streams.empty(), ErrorCode::invalid_argument, "GIT needs at least one stream");
  const auto feats = gradfeat::extract_batch(net, images, streams, opts.features);
  GitDetector det;
  det.features = opts.features;
  for (std::size_t s = 0; s < streams.size(); ++s)
    det.streams.push_back({streams[s], train_logistic_head(feats[s], labels, opts.head), 0.0});
  det.fusion = train_logistic_head(det.fuse_input(feats), labels, opts.head);
  return det;
}

GitDetector train_gran(const Net& net, const Tensor<float>& train_images,
                       std::span<const int> train_labels, const Tensor<float>& val_images,
                       std::span<const int> val_labels, const GitOptions& opts) {
  GitOptions o = opts;
  o.require_identity = false;
  const std::vector<StreamCandidate> c{
      {TransformKind::gaussian, transforms::default_grid(TransformKind::gaussian), nullptr}};
  return train_git(net, c, train_images, train_labels, val_images, val_labels, o);
}

}  // namespace gendetect::detectors
