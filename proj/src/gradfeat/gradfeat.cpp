#include "gradfeat/gradfeat.hpp"

#include <fstream>
#include <iomanip>

#include "common/parallel.hpp"

namespace gendetect::gradfeat {

namespace {

GradientFeatures features_for(const Net& net, std::span<const float> x0,
                              const transforms::StreamTransform& stream,
                              const Tensor<float>& target, const FeatureOptions& opts) {
  const auto xi = stream.apply(x0, net.input_shape());
  return {stream.label(), layer_gradient_norms<float>(net, xi, target, 1.0f, opts)};
}

}  // namespace

GradientFeatures extract_gradient_features(const Net& net, std::span<const float> x0,
                                           const transforms::StreamTransform& stream,
                                           const FeatureOptions& opts) {
  const auto y = predicted_onehot(net, x0);
  return features_for(net, x0, stream, y.vector, opts);
}

std::vector<GradientFeatures> extract_all_streams(
    const Net& net, std::span<const float> x0,
    const std::vector<transforms::StreamTransform>& streams, const FeatureOptions& opts) {
  require(!streams.empty(), ErrorCode::invalid_argument, "at least one stream is required");
  const auto y = predicted_onehot(net, x0);
  std::vector<GradientFeatures> out;
  out.reserve(streams.size());
  for (const auto& s : streams) out.push_back(features_for(net, x0, s, y.vector, opts));
  return out;
}

std::vector<FeatureMatrix> extract_batch(const Net& net, const Tensor<float>& images,
                                         const std::vector<transforms::StreamTransform>& streams,
                                         const FeatureOptions& opts) {
  require(!streams.empty(), ErrorCode::invalid_argument, "at least one stream is required");
  require(images.rank() == 4, ErrorCode::shape, "feature extraction expects (N,C,H,W) images");
  const std::size_t n = images.dim(0), L = net.param_layer_count();
  std::vector<FeatureMatrix> out(streams.size());
  for (auto& m : out) {
    m.rows = n;
    m.cols = L;
    m.values.assign(n * L, 0.0);
  }
  parallel_for(n, [&](std::size_t i) {
    const auto feats = extract_all_streams(net, images.sample(i), streams, opts);
    for (std::size_t s = 0; s < streams.size(); ++s)
      std::copy(feats[s].values.begin(), feats[s].values.end(), out[s].values.begin() + i * L);
  });
  return out;
}

void write_feature_dump(const std::filesystem::path& path,
                        const std::vector<transforms::StreamTransform>& streams,
                        const std::vector<FeatureMatrix>& features) {
  require(streams.size() == features.size(), ErrorCode::invalid_argument,
          "feature dump: stream count mismatch");
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << std::setprecision(17);
  const std::size_t n = features.empty() ? 0 : features[0].rows;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < streams.size(); ++s) {
      out << i << ' ' << streams[s].label();
      for (const double v : features[s].row(i)) out << ' ' << v;
      out << '\n';
    }
}

}  // namespace gendetect::gradfeat
