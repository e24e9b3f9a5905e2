#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "gendetect/gendetect.h"

namespace fs = std::filesystem;

TEST(CApi, VersionAndStatusStrings) {
  EXPECT_STRNE(gd_version(), "");
  EXPECT_STREQ(gd_status_string(GD_OK), "ok");
  EXPECT_STREQ(gd_status_string(GD_ERR_NOT_FOUND), "not found");
}

TEST(CApi, ErrorsReportedThroughStatus) {
  gd_network* net = nullptr;
  const auto path = (fs::temp_directory_path() / "gd_capi_missing.ckpt").string();
  EXPECT_EQ(gd_network_load(path.c_str(), &net), GD_ERR_NOT_FOUND);
  EXPECT_EQ(std::string(gd_last_error()), "checkpoint not found: " + path);
  EXPECT_EQ(net, nullptr);
  EXPECT_EQ(gd_dataset_generate("nope", 4, 8, 0, nullptr), GD_ERR_INVALID_ARGUMENT);
  gd_dataset* ds = nullptr;
  EXPECT_EQ(gd_dataset_generate("nope", 4, 8, 0, &ds), GD_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(gd_last_error()).find("nope"), std::string::npos);
}

TEST(CApi, DatasetNetworkSetupDetector) {
  gd_dataset *train = nullptr, *val = nullptr;
  ASSERT_EQ(gd_dataset_generate("shapes-v1", 64, 8, 1, &train), GD_OK);
  ASSERT_EQ(gd_dataset_generate("shapes-v1", 32, 8, 2, &val), GD_OK);
  EXPECT_EQ(gd_dataset_size(train), 64u);
  EXPECT_EQ(gd_dataset_num_classes(train), 4u);
  std::vector<float> img(3 * 8 * 8);
  EXPECT_EQ(gd_dataset_image(train, 0, img.data(), img.size()), GD_OK);
  EXPECT_EQ(gd_dataset_image(train, 0, img.data(), 5), GD_ERR_INVALID_ARGUMENT);

  const auto dir = fs::temp_directory_path() / "gd_capi";
  fs::remove_all(dir);
  ASSERT_EQ(gd_dataset_save(train, (dir / "train").string().c_str()), GD_OK);
  gd_dataset* loaded = nullptr;
  ASSERT_EQ(gd_dataset_load((dir / "train").string().c_str(), &loaded), GD_OK);
  EXPECT_EQ(gd_dataset_size(loaded), 64u);
  gd_dataset_free(loaded);

  gd_classifier_options co = gd_classifier_options_default();
  co.epochs = 1;
  gd_network* net = nullptr;
  ASSERT_EQ(gd_classifier_train(train, val, &co, &net), GD_OK) << gd_last_error();
  EXPECT_STREQ(gd_network_role(net), "classifier");
  char hash[17];
  EXPECT_EQ(gd_network_hash(net, hash, sizeof hash), GD_OK);
  EXPECT_EQ(gd_network_hash(net, hash, 4), GD_ERR_INVALID_ARGUMENT);
  const auto ckpt = (dir / "c.ckpt").string();
  ASSERT_EQ(gd_network_save(net, ckpt.c_str()), GD_OK);
  gd_network* back = nullptr;
  ASSERT_EQ(gd_network_load(ckpt.c_str(), &back), GD_OK);
  char hash2[17];
  gd_network_hash(back, hash2, sizeof hash2);
  EXPECT_STREQ(hash, hash2);
  gd_network_free(back);
  std::vector<uint32_t> pred(gd_dataset_size(val));
  EXPECT_EQ(gd_network_predict(net, val, pred.data()), GD_OK);

  gd_setup_options so = gd_setup_options_default();
  so.kind = "gaussian";
  so.has_severity = 1;
  so.severity = 0.05;
  gd_setup* setup = nullptr;
  ASSERT_EQ(gd_setup_build(&so, net, train, nullptr, &setup), GD_OK) << gd_last_error();
  EXPECT_EQ(gd_setup_size(setup), 64u);
  EXPECT_DOUBLE_EQ(gd_setup_severity(setup), 0.05);

  gd_detector_options dopt = gd_detector_options_default();
  dopt.kind = "gradnorm";
  gd_detector* det = nullptr;
  ASSERT_EQ(gd_detector_train(&dopt, net, nullptr, setup, nullptr, &det), GD_OK) << gd_last_error();
  EXPECT_STREQ(gd_detector_kind(det), "gradnorm");
  std::vector<double> scores(gd_setup_size(setup));
  EXPECT_EQ(gd_detector_score_setup(det, net, setup, scores.data()), GD_OK);
  for (const double s : scores) EXPECT_LE(s, 0.0);
  const auto dpath = (dir / "d.json").string();
  EXPECT_EQ(gd_detector_save(det, net, dpath.c_str()), GD_OK);
  gd_detector* det2 = nullptr;
  EXPECT_EQ(gd_detector_load(dpath.c_str(), net, nullptr, &det2), GD_OK);
  gd_detector_free(det2);

  dopt.kind = "mahalanobis";
  EXPECT_EQ(gd_detector_train(&dopt, net, nullptr, setup, nullptr, &det2), GD_ERR_INVALID_ARGUMENT);

  gd_detector_free(det);
  gd_setup_free(setup);
  gd_network_free(net);
  gd_dataset_free(train);
  gd_dataset_free(val);
  fs::remove_all(dir);
}

TEST(CApi, ConfigAndTinyExperiment) {
  gd_config* cfg = nullptr;
  ASSERT_EQ(gd_config_parse(
                "data.image_size = 8\ndata.train = 200\ndata.val = 50\ndata.pool = 200\n"
                "data.ood = 0\nclassifier.epochs = 2\nstreams = identity, gaussian\n"
                "detectors = git, gradnorm\nsetups = original, gaussian\nseen = gaussian\n",
                &cfg),
            GD_OK)
      << gd_last_error();
  EXPECT_EQ(gd_config_set(cfg, "bogus", "1"), GD_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(gd_config_set(cfg, "seed", "3"), GD_OK);
  gd_report* r = nullptr;
  ASSERT_EQ(gd_experiment_run(cfg, nullptr, &r), GD_OK) << gd_last_error();
  EXPECT_EQ(gd_report_seed(r), 3u);
  // per setup: git, git/identity, git/gaussian, gradnorm
  ASSERT_EQ(gd_report_row_count(r), 8u);
  gd_report_row row;
  ASSERT_EQ(gd_report_row_at(r, 0, &row), GD_OK);
  EXPECT_STREQ(row.setup, "original");
  EXPECT_STREQ(row.detector, "git");
  EXPECT_GE(row.auroc, 0.0);
  EXPECT_LE(row.auroc, 1.0);
  double fpr = -1, tpr = -1;
  EXPECT_EQ(gd_report_roc_point(r, 0, 0, &fpr, &tpr), GD_OK);
  EXPECT_EQ(fpr, 0.0);
  EXPECT_EQ(gd_report_row_at(r, 99, &row), GD_ERR_INVALID_ARGUMENT);
  const auto path = (fs::temp_directory_path() / "gd_capi_report.json").string();
  EXPECT_EQ(gd_report_save(r, path.c_str()), GD_OK);
  gd_report* back = nullptr;
  ASSERT_EQ(gd_report_load(path.c_str(), &back), GD_OK);
  EXPECT_EQ(gd_report_row_count(back), 8u);
  gd_report_free(back);
  gd_report_free(r);
  gd_config_free(cfg);
  fs::remove(path);
}
