#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "detectors/artifact.hpp"
#include "detectors/baselines.hpp"
#include "detectors/git.hpp"
#include "eval/metrics.hpp"
#include "models/models.hpp"
#include "support/oracles.hpp"

using namespace gendetect;
using namespace gendetect::detectors;
namespace fs = std::filesystem;

namespace {

Net tiny_classifier(std::uint64_t seed) {
  models::ClassifierConfig cfg;
  cfg.input_shape = {3, 8, 8};
  auto net = models::make_classifier(cfg);
  models::kaiming_init(net, seed);
  return net;
}

Tensor<float> random_images(std::size_t n, std::uint64_t seed) {
  Tensor<float> t({n, 3, 8, 8});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u;
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::vector<int> alternating(std::size_t n) {
  std::vector<int> l(n);
  for (std::size_t i = 0; i < n; ++i) l[i] = static_cast<int>(i % 2);
  return l;
}

}  // namespace

TEST(Logistic, SeparatesLinearData) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Matrix x = make_matrix(200, 2);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = static_cast<int>(i % 2);
    x.values[2 * i] = nd(rng) + (y[i] ? 3.0 : -3.0);
    x.values[2 * i + 1] = 100 + nd(rng);
  }
  const auto head = train_logistic_head(x, y);
  EXPECT_GT(eval::auroc(head.predict_all(x), y), 0.99);
  EXPECT_GT(head.weight[0], 0.0);
  EXPECT_EQ(head.trained_on, 200u);
  for (const double p : head.predict_all(x)) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Logistic, SingleClassRejected) {
  Matrix x = make_matrix(4, 1);
  EXPECT_THROW(train_logistic_head(x, std::vector<int>{1, 1, 1, 1}), Error);
}

TEST(Logistic, ConstantFeatureIsHarmless) {
  Matrix x = make_matrix(6, 1);
  for (auto& v : x.values) v = 2.0;
  const auto head = train_logistic_head(x, std::vector<int>{0, 1, 0, 1, 0, 1});
  for (const double p : head.predict_all(x)) EXPECT_TRUE(std::isfinite(p));
}

TEST(Mahalanobis, MatchesDenseInverse) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  const std::size_t n = 300, d = 4, c = 3;
  Matrix f = make_matrix(n, d);
  std::vector<std::size_t> cls(n);
  for (std::size_t i = 0; i < n; ++i) {
    cls[i] = i % c;
    for (std::size_t k = 0; k < d; ++k)
      f.values[i * d + k] = nd(rng) * (1.0 + k) + 2.0 * static_cast<double>(cls[i]) +
                            (k > 0 ? 0.5 * f.values[i * d] : 0.0);
  }
  for (const bool tied : {true, false}) {
    GaussianFitOptions o;
    o.tied = tied;
    const auto g = fit_layer_gaussian(f, cls, c, o);
    EXPECT_EQ(g.tied(), tied);
    for (std::size_t i = 0; i < 50; ++i) {
      const auto row = f.row(i);
      EXPECT_NEAR(g.score(row), oracle::mahalanobis_score(g.means(), g.covariances(), row), 1e-8);
    }
  }
}

TEST(Mahalanobis, IdentityCovarianceByHand) {
  Eigen::MatrixXd means(2, 2);
  means << 0, 0, 3, 4;
  const LayerGaussian g(means, {Eigen::MatrixXd::Identity(2, 2)});
  EXPECT_NEAR(g.score(std::vector<double>{0, 0}), 0.0, 1e-15);
  EXPECT_NEAR(g.score(std::vector<double>{1, 1}), -2.0, 1e-12);
  EXPECT_NEAR(g.score(std::vector<double>{3, 3}), -1.0, 1e-12);
}

TEST(Mahalanobis, FitComputesClassMeans) {
  Matrix f = make_matrix(4, 1);
  f.values = {1, 3, 10, 14};
  const std::vector<std::size_t> cls{0, 0, 1, 1};
  const auto g = fit_layer_gaussian(f, cls, 2);
  EXPECT_DOUBLE_EQ(g.means()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.means()(1, 0), 12.0);
}

TEST(Mahalanobis, SingularCovarianceRejected) {
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(1, 2);
  EXPECT_THROW(LayerGaussian(means, {Eigen::MatrixXd::Zero(2, 2)}), Error);
}

TEST(Odin, ZeroEpsilonIsIdentity) {
  const auto net = tiny_classifier(1);
  const auto img = random_images(1, 2);
  const auto x = img.sample(0);
  EXPECT_EQ(odin_input_shift<float>(net, x, 0.0f), std::vector<float>(x.begin(), x.end()));
  const auto shifted = odin_input_shift<float>(net, x, 0.01f);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(shifted[i] - x[i]), 0.01f + 1e-7f);
}

TEST(Git, TrainScoreAndRoundTrip) {
  const auto net = tiny_classifier(2);
  const auto train = random_images(40, 3), val = random_images(20, 4), test = random_images(6, 5);
  const auto cand = default_candidates(nullptr);
  const auto git = train_git(net, cand, train, alternating(40), val, alternating(20));
  ASSERT_EQ(git.streams.size(), 4u);
  EXPECT_EQ(git.streams[0].transform.kind, TransformKind::identity);
  EXPECT_EQ(git.fusion.dim(), 4u);

  Detector det;
  det.kind = DetectorKind::git;
  det.git = git;
  const auto path = fs::temp_directory_path() / "gd_test_git.json";
  save_detector(det, net, path);
  const auto back = load_detector(path, net, nullptr);
  EXPECT_EQ(back.score_batch(net, test), det.score_batch(net, test));

  const auto other = tiny_classifier(9);
  try {
    load_detector(path, other, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("classifier hash mismatch"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Git, IdentityStreamRequired) {
  const auto net = tiny_classifier(2);
  const auto train = random_images(10, 3);
  const std::vector<StreamCandidate> c{{TransformKind::gaussian, {0.5}, nullptr}};
  EXPECT_THROW(train_git(net, c, train, alternating(10), train, alternating(10)), Error);
}

TEST(Artifact, MissingFieldNamed) {
  const auto net = tiny_classifier(2);
  const auto path = fs::temp_directory_path() / "gd_test_bad.json";
  {
    std::ofstream out(path);
    out << "{\"format\": \"gendetect-det-1\", \"kind\": \"git\"}";
  }
  try {
    load_detector(path, net, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::format);
    EXPECT_NE(std::string(e.what()).find("classifier_hash"), std::string::npos);
  }
  fs::remove(path);
  EXPECT_THROW(load_detector(path, net, nullptr), Error);
}

TEST(Artifact, GradNormAndMahalanobisRoundTrip) {
  const auto net = tiny_classifier(3);
  const auto train = random_images(40, 6), val = random_images(20, 7), test = random_images(5, 8);
  std::vector<std::uint32_t> classes(40);
  for (std::size_t i = 0; i < 40; ++i) classes[i] = static_cast<std::uint32_t>(i % 4);

  Detector gn;
  gn.kind = DetectorKind::gradnorm_all;
  gn.gradnorm = train_gradnorm_all(net, train, alternating(40));
  Detector mh;
  mh.kind = DetectorKind::mahalanobis;
  mh.mahalanobis = train_mahalanobis(net, fit_mahalanobis(net, train, classes, 4), train,
                                     alternating(40), val, alternating(20));
  for (const auto* det : {&gn, &mh}) {
    const auto path = fs::temp_directory_path() / "gd_test_det.json";
    save_detector(*det, net, path);
    const auto back = load_detector(path, net, nullptr);
    const auto a = det->score_batch(net, test), b = back.score_batch(net, test);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
    fs::remove(path);
  }
}

TEST(GradNorm, LastLayerScoreIsNegatedNorm) {
  const auto net = tiny_classifier(4);
  const auto imgs = random_images(3, 9);
  GradNormDetector d;
  const auto s = d.score_batch(net, imgs);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s[i], -gradnorm_last_layer(net, imgs.sample(i)));
}
