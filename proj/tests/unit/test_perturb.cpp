#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "data/synthetic.hpp"
#include "models/models.hpp"
#include "perturb/attacks.hpp"
#include "perturb/calibrate.hpp"
#include "perturb/noise.hpp"
#include "perturb/setup.hpp"

using namespace gendetect;
using namespace gendetect::perturb;
namespace fs = std::filesystem;

namespace {

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<float>& v) {
  Moments m;
  for (const float x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (const float x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size());
  return m;
}

models::Net tiny_classifier(std::uint64_t seed) {
  models::ClassifierConfig cfg;
  cfg.input_shape = {3, 8, 8};
  auto net = models::make_classifier(cfg);
  models::kaiming_init(net, seed);
  return net;
}

data::Dataset tiny_pool(data::SyntheticFamily family, std::size_t n, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.family = family;
  spec.count = n;
  spec.size = 8;
  spec.seed = seed;
  return data::generate_synthetic(spec);
}

float ce(const models::Net& net, std::span<const float> x, std::size_t label) {
  const std::size_t y[1] = {label};
  const auto logits = net.forward(autodiff::as_batch(x, net.input_shape()));
  return autodiff::cross_entropy(logits, autodiff::one_hot<float>(y, logits.dim(1))).loss;
}

}  // namespace

TEST(Noise, GaussianStatistics) {
  Rng rng(1);
  const std::vector<float> img(20000, 0.5f);
  const auto m = moments(gaussian_noise(img, 0.1, rng));
  EXPECT_NEAR(m.mean, 0.5, 0.005);
  EXPECT_NEAR(std::sqrt(m.var), 0.1, 0.005);
}

TEST(Noise, ShotStatistics) {
  Rng rng(2);
  const std::vector<float> img(20000, 0.5f);
  const auto m = moments(shot_noise(img, 100.0, rng));
  EXPECT_NEAR(m.mean, 0.5, 0.005);
  EXPECT_NEAR(m.var, 0.5 / 100.0, 0.0005);
  const std::vector<float> black(10, 0.0f);
  for (const float v : shot_noise(black, 10.0, rng)) EXPECT_EQ(v, 0.0f);
}

TEST(Noise, ImpulseStatistics) {
  Rng rng(3);
  const std::vector<float> img(20000, 0.5f);
  const auto out = impulse_noise(img, 0.2, rng);
  double changed = 0, ones = 0;
  for (const float v : out) {
    if (v != 0.5f) ++changed;
    if (v == 1.0f) ++ones;
    EXPECT_TRUE(v == 0.5f || v == 0.0f || v == 1.0f);
  }
  EXPECT_NEAR(changed / 20000.0, 0.2, 0.01);
  EXPECT_NEAR(ones / changed, 0.5, 0.03);
}

TEST(Noise, OutputsClipped) {
  Rng rng(4);
  const std::vector<float> img(1000, 0.95f);
  for (const float v : gaussian_noise(img, 0.5, rng)) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  for (const float v : shot_noise(img, 2.0, rng)) EXPECT_LE(v, 1.0f);
}

TEST(Calibration, ExponentialOracle) {
  CalibrationSpec spec;
  spec.lower = 1e-4;
  spec.upper = 5.0;
  const auto r = calibrate_severity([](double s) { return 1.0 - std::exp(-s); }, 0.0, spec);
  EXPECT_LE(std::abs(r.rate - 0.5), 0.03);
  EXPECT_NEAR(r.severity, -std::log(1.0 - r.rate), 1e-12);
  EXPECT_LE(r.iterations, 25u);
  EXPECT_FALSE(r.clean_at_target);
}

TEST(Calibration, DecreasingLogScale) {
  CalibrationSpec spec;
  spec.lower = 1.0;
  spec.upper = 1e4;
  spec.log_scale = true;
  spec.decreasing = true;
  spec.tolerance = 0.005;
  const auto r = calibrate_severity([](double f) { return std::exp(-f / 100.0); }, 0.0, spec);
  EXPECT_LE(std::abs(r.rate - 0.5), 0.005);
  EXPECT_NEAR(r.severity, 100.0 * std::log(2.0), 2.0);
}

TEST(Calibration, UnreachableTargetRejected) {
  CalibrationSpec spec;
  spec.lower = 0.0;
  spec.upper = 0.1;
  EXPECT_THROW(calibrate_severity([](double s) { return s; }, 0.0, spec), Error);
}

TEST(Calibration, CleanAlreadyAtTarget) {
  CalibrationSpec spec;
  spec.lower = 0.1;
  spec.upper = 1.0;
  const auto r = calibrate_severity([](double) { return 0.9; }, 0.6, spec);
  EXPECT_TRUE(r.clean_at_target);
  EXPECT_EQ(r.severity, 0.0);
}

TEST(Attacks, FgsmStaysInBall) {
  const auto net = tiny_classifier(1);
  const auto pool = tiny_pool(data::SyntheticFamily::shapes_v1, 4, 1);
  const auto x = pool.image(0);
  const auto adv = fgsm<float>(net, x, pool.labels[0], 0.03f);
  const auto it = bim<float>(net, x, pool.labels[0], 0.03f, 10);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LE(std::abs(adv[i] - x[i]), 0.03f + 1e-6f);
    EXPECT_LE(std::abs(it[i] - x[i]), 0.03f + 1e-6f);
    EXPECT_GE(adv[i], 0.0f);
    EXPECT_LE(it[i], 1.0f);
  }
}

TEST(Attacks, FgsmRaisesLoss) {
  const auto net = tiny_classifier(2);
  const auto pool = tiny_pool(data::SyntheticFamily::shapes_v1, 8, 2);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto x = pool.image(i);
    const auto before = ce(net, x, pool.labels[i]);
    const auto adv = fgsm<float>(net, x, pool.labels[i], 0.01f);
    const auto after = ce(net, adv, pool.labels[i]);
    EXPECT_GE(after, before - 1e-4f);
  }
}

TEST(Attacks, DeepFoolLinearClosedForm) {
  autodiff::Network<double> net({3}, {autodiff::LayerSpec::dense(3, 2)});
  auto& p = net.mutable_params()[0];
  const double w[6] = {0.4, -0.2, 0.1, -0.3, 0.5, 0.2};
  std::copy(w, w + 6, p.weight.data().begin());
  p.bias[0] = 0.3;
  p.bias[1] = 0.0;
  const std::vector<double> x{0.5, 0.5, 0.5};
  // class 0 wins: z0 = 0.45, z1 = 0.2
  double wd[3], f = 0, n2 = 0;
  for (int i = 0; i < 3; ++i) {
    wd[i] = w[3 + i] - w[i];
    n2 += wd[i] * wd[i];
    f += wd[i] * x[i];
  }
  f += p.bias[1] - p.bias[0];
  const auto step = deepfool_linear_step<double>(net, x, 0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(step[i], std::abs(f) / n2 * wd[i], 1e-12);
  const auto r = deepfool<double>(net, x, 0, 50, 0.02);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1u);
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(r.image[i], x[i] + 1.02 * (std::abs(f) + 1e-4) / n2 * wd[i], 1e-12);
  const auto same = deepfool<double>(net, x, 1);
  EXPECT_EQ(same.iterations, 0u);
  EXPECT_EQ(same.image, x);
}

TEST(Attacks, CwStaysInBoxAndImproves) {
  const auto net = tiny_classifier(3);
  const auto pool = tiny_pool(data::SyntheticFamily::shapes_v1, 2, 3);
  const auto x = pool.image(0);
  const auto pred = models::predict_labels(net, autodiff::as_batch(x, net.input_shape()))[0];
  const auto r = cwl2<float>(net, x, pred, 5.0f, 0.05f, 100);
  for (const float v : r.image) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  if (r.success) {
    const auto now = models::predict_labels(net, autodiff::as_batch<float>(r.image, net.input_shape()))[0];
    EXPECT_NE(now, pred);
  }
}

TEST(Setup, BuildSaveLoad) {
  const auto net = tiny_classifier(4);
  const auto pool = tiny_pool(data::SyntheticFamily::shapes_v1, 60, 4);
  SetupConfig cfg;
  cfg.name = "gaussian";
  cfg.kind = SetupKind::gaussian;
  cfg.seed = 7;
  cfg.severity = 0.1;
  const auto a = build_setup(cfg, net, pool);
  const auto b = build_setup(cfg, net, pool);
  EXPECT_EQ(a.images.storage(), b.images.storage());
  EXPECT_EQ(a.labels, b.labels);
  ASSERT_EQ(a.size(), 60u);
  const auto pred = models::predict_labels(net, a.images);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(a.labels[i], static_cast<int>(pred[i] != static_cast<std::size_t>(a.true_classes[i])));
  EXPECT_EQ(a.provenance.severity, 0.1);
  EXPECT_FALSE(a.provenance.calibrated);

  const auto dir = fs::temp_directory_path() / "gd_test_setup";
  fs::remove_all(dir);
  save_setup(a, dir);
  const auto back = load_setup(dir);
  EXPECT_EQ(back.images.storage(), a.images.storage());
  EXPECT_EQ(back.labels, a.labels);
  EXPECT_EQ(back.provenance.name, "gaussian");
  EXPECT_EQ(back.provenance.classifier_hash, models::network_hash(net));
  fs::remove_all(dir);
}

TEST(Setup, OriginalAndOodBalanced) {
  const auto net = tiny_classifier(5);
  const auto pool = tiny_pool(data::SyntheticFamily::shapes_v1, 80, 5);
  const auto ood = tiny_pool(data::SyntheticFamily::textures_v1, 30, 6);
  SetupConfig cfg;
  cfg.name = "original";
  cfg.kind = SetupKind::original;
  const auto orig = build_setup(cfg, net, pool);
  EXPECT_DOUBLE_EQ(orig.positive_fraction(), 0.5);
  cfg.name = "ood";
  cfg.kind = SetupKind::ood;
  const auto o = build_setup(cfg, net, pool, &ood);
  EXPECT_DOUBLE_EQ(o.positive_fraction(), 0.5);
  for (std::size_t i = 0; i < o.size(); ++i)
    EXPECT_EQ(o.labels[i] == 1, o.true_classes[i] == -1);
  EXPECT_THROW(build_setup(cfg, net, pool, nullptr), Error);
}

TEST(Setup, KindHelpers) {
  EXPECT_TRUE(is_noise(SetupKind::shot));
  EXPECT_TRUE(is_adversarial(SetupKind::bim));
  EXPECT_FALSE(is_calibrated(SetupKind::ood));
  EXPECT_EQ(parse_setup_kind("cwl2"), SetupKind::cwl2);
  EXPECT_FALSE(parse_setup_kind("rain").has_value());
}
