#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "data/synthetic.hpp"
#include "eval/config.hpp"
#include "models/models.hpp"

using namespace gendetect;
namespace fs = std::filesystem;

namespace {

data::Dataset make(data::SyntheticFamily f, std::size_t n, std::uint64_t seed, std::size_t size = 16) {
  data::SyntheticSpec spec;
  spec.family = f;
  spec.count = n;
  spec.size = size;
  spec.seed = seed;
  return data::generate_synthetic(spec);
}

fs::path temp(const char* name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Synthetic, BalancedAndDeterministic) {
  const auto a = make(data::SyntheticFamily::shapes_v1, 400, 1);
  EXPECT_EQ(a.num_classes, 4u);
  std::vector<int> counts(4);
  for (const auto l : a.labels) ++counts[l];
  for (const int c : counts) EXPECT_EQ(c, 100);
  const auto b = make(data::SyntheticFamily::shapes_v1, 400, 1);
  EXPECT_EQ(a.images.storage(), b.images.storage());
  const auto c = make(data::SyntheticFamily::shapes_v1, 400, 2);
  EXPECT_NE(a.images.storage(), c.images.storage());
  EXPECT_NO_THROW(a.validate());
}

TEST(Synthetic, OrderIndependentSamples) {
  const auto small = make(data::SyntheticFamily::textures_v1, 10, 3);
  const auto big = make(data::SyntheticFamily::textures_v1, 30, 3);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto a = small.image(i), b = big.image(i);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
  EXPECT_EQ(small.num_classes, 3u);
}

TEST(Container, RoundTrip) {
  const auto ds = make(data::SyntheticFamily::shapes_v1, 12, 4);
  const auto dir = temp("gd_test_ds");
  data::save_dataset(ds, dir);
  const auto back = data::load_dataset(dir);
  EXPECT_EQ(back.images.storage(), ds.images.storage());
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.image_shape(), ds.image_shape());
  fs::remove_all(dir);
}

TEST(Container, TruncatedLabelsNamed) {
  const auto ds = make(data::SyntheticFamily::shapes_v1, 12, 4);
  const auto dir = temp("gd_test_ds_trunc");
  data::save_dataset(ds, dir);
  fs::resize_file(dir / "labels.u32", 4 * 11);
  EXPECT_NE(error_of([&] { data::load_dataset(dir); }).find("label payload length"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Container, PixelRangeNamed) {
  auto ds = make(data::SyntheticFamily::shapes_v1, 4, 4);
  ds.images[5] = 1.5f;
  EXPECT_NE(error_of([&] { ds.validate(); }).find("pixel range"), std::string::npos);
  const auto dir = temp("gd_test_ds_pixel");
  EXPECT_THROW(data::save_dataset(ds, dir), Error);
  fs::remove_all(dir);
}

TEST(Container, LabelOverflowAndVersion) {
  auto ds = make(data::SyntheticFamily::shapes_v1, 4, 4);
  ds.labels[0] = 9;
  EXPECT_NE(error_of([&] { ds.validate(); }).find("label overflow"), std::string::npos);
  ds.labels[0] = 0;
  const auto dir = temp("gd_test_ds_version");
  data::save_dataset(ds, dir);
  {
    std::ifstream in(dir / "meta.json");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string meta = ss.str();
    meta.replace(meta.find("gendetect-ds-1"), 14, "gendetect-ds-9");
    std::ofstream(dir / "meta.json") << meta;
  }
  EXPECT_NE(error_of([&] { data::load_dataset(dir); }).find("version mismatch"), std::string::npos);
  fs::remove_all(dir);
  EXPECT_NE(error_of([&] { data::load_dataset(dir); }).find("dataset not found"), std::string::npos);
}

TEST(Models, ClassifierLearnsShapes) {
  const auto train = make(data::SyntheticFamily::shapes_v1, 800, 5);
  const auto val = make(data::SyntheticFamily::shapes_v1, 100, 6);
  models::ClassifierConfig cfg;
  cfg.input_shape = train.image_shape();
  cfg.epochs = 15;
  cfg.seed = 1;
  models::TrainingReport rep;
  const auto net = models::train_classifier(cfg, train, val, &rep);
  EXPECT_EQ(rep.epoch_loss.size(), 15u);
  EXPECT_LT(rep.epoch_loss.back(), rep.epoch_loss.front());
  EXPECT_GT(models::accuracy(net, val), 0.4);
}

TEST(Models, CheckpointRoundTrip) {
  models::ClassifierConfig cfg;
  cfg.input_shape = {3, 16, 16};
  auto net = models::make_classifier(cfg);
  models::kaiming_init(net, 3);
  const auto path = temp("gd_test.ckpt");
  models::save_checkpoint(net, {"classifier", "smallcnn-v1", 4, 3, 0, 0.5}, path);
  const auto back = models::load_checkpoint(path);
  EXPECT_EQ(models::network_hash(back.net), models::network_hash(net));
  EXPECT_EQ(back.meta.role, "classifier");
  EXPECT_EQ(back.meta.num_classes, 4u);
  fs::remove(path);
  EXPECT_EQ(error_of([&] { models::load_checkpoint(path); }),
            "checkpoint not found: " + path.string());
  models::kaiming_init(net, 4);
  EXPECT_NE(models::network_hash(back.net), models::network_hash(net));
}

TEST(Models, AutoencoderReducesLoss) {
  const auto train = make(data::SyntheticFamily::shapes_v1, 64, 7);
  models::AutoencoderConfig cfg;
  cfg.input_shape = train.image_shape();
  cfg.epochs = 3;
  std::vector<double> loss;
  const auto ae = models::train_autoencoder(cfg, train, &loss);
  EXPECT_LT(loss.back(), loss.front());
  const auto err = models::reconstruction_error(ae, train);
  EXPECT_GT(err.bce, 0.0);
}

TEST(Config, ParseAndErrors) {
  const auto c = eval::parse_config_text(
      "seed = 5\n# comment\nsetups = original, fgsm\nsetup.fgsm.count = 100\nstreams = identity, median\n");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.setups, (std::vector<std::string>{"original", "fgsm"}));
  EXPECT_EQ(c.setup_count.at("fgsm"), 100u);
  EXPECT_NE(error_of([] { eval::parse_config_text("seed = 1\nbogus = 2\n"); })
                .find("unknown config key 'bogus' (line 2)"),
            std::string::npos);
  EXPECT_NE(error_of([] { eval::parse_config_text("seen = shot\nsetups = original\n"); }).find("seen"),
            std::string::npos);
  EXPECT_NE(error_of([] { eval::parse_config_text("streams = gaussian\n"); }).find("identity"),
            std::string::npos);
  EXPECT_THROW(eval::parse_config_text("data.train = many\n"), Error);
  EXPECT_NE(error_of([] { eval::load_config("/nonexistent/x.cfg"); }).find("config not found"),
            std::string::npos);
}
