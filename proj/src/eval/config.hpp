#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gendetect::eval {

// Flat "key = value" configuration. '#' starts a comment; list values are
// comma separated.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  std::string family = "shapes-v1";
  std::string ood_family = "textures-v1";
  std::size_t image_size = 32;
  std::size_t train_count = 3000;
  std::size_t val_count = 500;
  std::size_t pool_count = 2000;
  std::size_t ood_count = 1000;

  std::string classifier_preset = "smallcnn-v1";
  std::size_t classifier_epochs = 20;
  double classifier_lr = 0.05;
  std::size_t classifier_batch = 64;
  std::string classifier_checkpoint;  // load instead of training when set

  std::size_t autoencoder_epochs = 30;
  std::size_t autoencoder_train = 0;  // leading training images used; 0 = all
  std::string autoencoder_checkpoint;

  std::vector<std::string> streams{"identity", "gaussian", "wiener", "median", "autoencoder"};
  std::vector<std::string> detectors{"git", "gran", "gradnorm", "mahalanobis"};
  std::vector<std::string> setups{"original", "gaussian", "shot", "impulse", "fgsm", "bim", "ood"};
  std::map<std::string, std::size_t> setup_count;  // per-setup pool size
  std::string seen = "fgsm";

  bool per_parameter_mean = false;
  bool mahalanobis_tied = true;
  bool ablation_train_all = false;
  std::size_t ablation_max_per_setup = 0;  // 0 = whole training split
};

// Assigns one key; throws on unknown keys and malformed values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Checks names and cross references; throws with the offending key.
void validate_config(const ExperimentConfig& cfg);

}  // namespace gendetect::eval
