#include <gtest/gtest.h>

#include "autodiff/loss.hpp"
#include "autodiff/network.hpp"
#include "support/gradcases.hpp"

using namespace gendetect;
using namespace gendetect::autodiff;

TEST(Autodiff, FiniteDifferencesEveryLayerKind) {
  for (const auto& [name, err] : oracle::run_gradient_cases(3, 11)) {
    EXPECT_LE(err, 1e-5) << name;
  }
}

TEST(Autodiff, DenseForwardByHand) {
  Network<double> net({2}, {LayerSpec::dense(2, 1)});
  auto& p = net.mutable_params()[0];
  p.weight[0] = 2;
  p.weight[1] = -1;
  p.bias[0] = 0.5;
  const auto y = net.forward(Tensor<double>({1, 2}, {3.0, 4.0}));
  EXPECT_DOUBLE_EQ(y[0], 2.5);
}

TEST(Autodiff, ShapeInference) {
  EXPECT_EQ(LayerSpec::conv2d(3, 8, 3, 1, 1).infer_output({3, 32, 32}), (Shape{8, 32, 32}));
  EXPECT_EQ(LayerSpec::conv2d(3, 12, 4, 2, 1).infer_output({3, 32, 32}), (Shape{12, 16, 16}));
  EXPECT_EQ(LayerSpec::conv_transpose2d(12, 3, 4, 2, 1).infer_output({12, 16, 16}),
            (Shape{3, 32, 32}));
  EXPECT_EQ(LayerSpec::max_pool2d(2).infer_output({8, 32, 32}), (Shape{8, 16, 16}));
  EXPECT_EQ(LayerSpec::flatten().infer_output({8, 4, 4}), (Shape{128}));
}

TEST(Autodiff, ShapeMismatchRejected) {
  EXPECT_THROW(Network<float>({5}, {LayerSpec::dense(4, 2)}), Error);
  Network<float> net({4}, {LayerSpec::dense(4, 2)});
  try {
    net.forward(Tensor<float>({1, 5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shape);
  }
}

TEST(Autodiff, StaleTapeRejected) {
  Network<float> net({4}, {LayerSpec::dense(4, 2)});
  Tape<float> tape;
  const auto y = net.forward(Tensor<float>({1, 4}, 1.0f), &tape);
  net.mutable_params()[0].weight[0] = 3.0f;
  EXPECT_THROW(net.backward(tape, Tensor<float>(y.shape(), 1.0f)), Error);
}

TEST(Autodiff, CrossEntropyGradient) {
  const Tensor<double> logits({1, 3}, {1.0, 2.0, 0.5});
  const std::size_t y[1] = {1};
  const auto r = cross_entropy(logits, one_hot<double>(y, 3));
  const auto p = softmax(logits);
  EXPECT_NEAR(r.loss, -std::log(p[1]), 1e-12);
  EXPECT_NEAR(r.grad[0], p[0], 1e-12);
  EXPECT_NEAR(r.grad[1], p[1] - 1.0, 1e-12);
}

TEST(Autodiff, ArgmaxLowestIndexOnTies) {
  const std::vector<float> v{0.2f, 0.7f, 0.7f};
  EXPECT_EQ(argmax<float>(v), 1u);
}

TEST(Autodiff, CastKeepsValues) {
  Network<double> net({3}, {LayerSpec::dense(3, 2)});
  net.mutable_params()[0].weight[4] = 0.25;
  const auto f = net.cast<float>();
  EXPECT_FLOAT_EQ(f.params()[0].weight[4], 0.25f);
}
