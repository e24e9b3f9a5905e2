#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "detectors/artifact.hpp"
#include "eval/config.hpp"
#include "eval/metrics.hpp"
#include "perturb/setup.hpp"

namespace gendetect::eval {

using Net = autodiff::Network<float>;
using autodiff::Tensor;

struct ReportRow {
  std::string setup, detector;
  double auroc = 0, tnr95 = 0;
  std::size_t n = 0;
  bool seen = false;
  std::vector<RocPoint> roc;
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;
  // Diagnostics; not part of the summary table.
  double classifier_accuracy = 0;
  std::map<std::string, double> setup_rates;
  std::map<std::string, double> setup_severities;
  std::map<std::string, std::size_t> calibration_iterations;

  const ReportRow* find(const std::string& setup, const std::string& detector) const;
};

// Rows of `images` selected by `indices`.
Tensor<float> gather(const Tensor<float>& images, std::span<const std::size_t> indices);
std::vector<int> gather(std::span<const int> labels, std::span<const std::size_t> indices);

struct DetectorInputs {
  std::shared_ptr<const Net> autoencoder;  // optional autoencoder stream
  std::vector<std::string> streams{"identity", "gaussian", "wiener", "median", "autoencoder"};
  const data::Dataset* clean_train = nullptr;  // Mahalanobis class statistics
  bool mahalanobis_tied = true;
  gradfeat::FeatureOptions features;
};

std::vector<detectors::StreamCandidate> stream_candidates(const std::vector<std::string>& streams,
                                                          std::shared_ptr<const Net> ae);

// Trains one detector kind on (train, val) images of a setup.
detectors::Detector train_detector(detectors::DetectorKind kind, const Net& net,
                                   const DetectorInputs& in, const Tensor<float>& train_images,
                                   std::span<const int> train_labels,
                                   const Tensor<float>& val_images,
                                   std::span<const int> val_labels);

// The train, val, pool or ood dataset of an experiment.
data::Dataset experiment_data(const ExperimentConfig& cfg, const std::string& part);

// Seed of the stratified split of setup `name`.
std::uint64_t split_seed(std::uint64_t seed, const std::string& name);

// Full protocol: data, classifier, autoencoder, setups, detectors trained on
// the seen setup, scores on every setup's test split. When `artifacts` is set
// the trained networks and detectors are written there.
EvalReport run_experiment(const ExperimentConfig& cfg,
                          const std::filesystem::path* artifacts = nullptr);

void add_row(EvalReport& report, const std::string& setup, const std::string& detector,
             std::span<const double> scores, std::span<const int> labels, bool seen);

std::string roc_filename(const std::string& setup, const std::string& detector);

// summary.csv (setup,detector,auroc,tnr95,n,seen) and roc/roc_<setup>_<detector>.txt.
void emit_report(const EvalReport& report, const std::filesystem::path& dir);
std::vector<ReportRow> parse_summary(const std::filesystem::path& path);
std::vector<RocPoint> parse_roc(const std::filesystem::path& path);

// Complete report including ROC points and diagnostics.
void save_report_json(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report_json(const std::filesystem::path& path);

}  // namespace gendetect::eval
