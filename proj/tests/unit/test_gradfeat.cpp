#include <gtest/gtest.h>

#include <random>

#include "autodiff/loss.hpp"
#include "detectors/baselines.hpp"
#include "gradfeat/gradfeat.hpp"
#include "models/models.hpp"

using namespace gendetect;
using namespace gendetect::autodiff;
using transforms::StreamTransform;

namespace {

Network<float> random_dense(std::size_t in, std::size_t out, std::uint64_t seed) {
  Network<float> net({in}, {LayerSpec::dense(in, out)});
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  for (auto& v : net.mutable_params()[0].weight.data()) v = nd(rng);
  for (auto& v : net.mutable_params()[0].bias.data()) v = nd(rng);
  return net;
}

std::vector<double> probabilities(const Network<float>& net, const std::vector<float>& x) {
  const auto p = softmax(net.forward(as_batch<float>(x, net.input_shape())));
  return {p.data().begin(), p.data().end()};
}

Network<float> small_cnn(std::uint64_t seed) {
  models::ClassifierConfig cfg;
  cfg.input_shape = {3, 8, 8};
  auto net = models::make_classifier(cfg);
  models::kaiming_init(net, seed);
  return net;
}

std::vector<float> random_image(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u;
  std::vector<float> v(n);
  for (auto& e : v) e = u(rng);
  return v;
}

}  // namespace

TEST(GradFeat, SingleDenseLayerClosedForm) {
  const auto net = random_dense(4, 3, 1);
  const std::vector<float> x{0.3f, -0.7f, 0.2f, 0.9f};
  const auto p = probabilities(net, x);
  const std::size_t y = argmax<double>(p);
  double err = 0, xsum = 0;
  for (std::size_t c = 0; c < 3; ++c) err += std::abs(p[c] - (c == y ? 1.0 : 0.0));
  for (const float v : x) xsum += std::abs(v);
  const auto f = gradfeat::extract_gradient_features(net, x, StreamTransform::identity());
  ASSERT_EQ(f.values.size(), 1u);
  EXPECT_NEAR(f.values[0], err * (xsum + 1.0), 1e-5);

  gradfeat::FeatureOptions mean;
  mean.per_parameter_mean = true;
  const auto m = gradfeat::extract_gradient_features(net, x, StreamTransform::identity(), mean);
  EXPECT_NEAR(m.values[0], err * (xsum + 1.0) / 15.0, 1e-6);
}

TEST(GradFeat, GradNormClosedForm) {
  const auto net = random_dense(4, 3, 2);
  const std::vector<float> x{0.5f, 0.1f, -0.4f, 0.8f};
  const auto p = probabilities(net, x);
  double dev = 0, xsum = 0;
  for (const double v : p) dev += std::abs(v - 1.0 / 3.0);
  for (const float v : x) xsum += std::abs(v);
  EXPECT_NEAR(detectors::gradnorm_last_layer(net, x), dev * (xsum + 1.0), 1e-5);
}

TEST(GradFeat, StreamsShareThePrediction) {
  const auto net = small_cnn(3);
  const auto x = random_image(3 * 8 * 8, 4);
  const std::vector<StreamTransform> streams{StreamTransform::identity(),
                                             StreamTransform::gaussian(0.8),
                                             StreamTransform::median(3)};
  const auto all = gradfeat::extract_all_streams(net, x, streams);
  ASSERT_EQ(all.size(), 3u);
  const auto y = gradfeat::predicted_onehot(net, std::span<const float>(x));
  const auto xt = streams[1].apply(x, net.input_shape());
  const auto direct = gradfeat::layer_gradient_norms(net, std::span<const float>(xt), y.vector);
  EXPECT_EQ(all[1].values, direct);
  EXPECT_EQ(all[0].values.size(), net.param_layer_count());
  for (const auto& f : all)
    for (const double v : f.values) EXPECT_GE(v, 0.0);
}

TEST(GradFeat, BatchMatchesPerSample) {
  const auto net = small_cnn(5);
  Tensor<float> batch({3, 3, 8, 8});
  const auto img = random_image(batch.size(), 6);
  std::copy(img.begin(), img.end(), batch.data().begin());
  const std::vector<StreamTransform> streams{StreamTransform::identity(), StreamTransform::wiener(0.02)};
  const auto m = gradfeat::extract_batch(net, batch, streams);
  ASSERT_EQ(m.size(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto f = gradfeat::extract_all_streams(net, batch.sample(i), streams);
    for (std::size_t s = 0; s < 2; ++s) {
      const auto row = m[s].row(i);
      EXPECT_EQ(std::vector<double>(row.begin(), row.end()), f[s].values);
    }
  }
}

TEST(GradFeat, ConfidentCorrectInputHasSmallIdentityGradient) {
  auto net = random_dense(2, 2, 0);
  auto& p = net.mutable_params()[0];
  p.weight[0] = 20;
  p.weight[1] = 0;
  p.weight[2] = -20;
  p.weight[3] = 0;
  p.bias[0] = p.bias[1] = 0;
  const std::vector<float> far{1.0f, 0.0f}, near{0.01f, 0.0f};
  const auto a = gradfeat::extract_gradient_features(net, far, StreamTransform::identity());
  const auto b = gradfeat::extract_gradient_features(net, near, StreamTransform::identity());
  EXPECT_LT(a.values[0], b.values[0]);
}
