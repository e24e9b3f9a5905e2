#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "autodiff/network.hpp"
#include "data/dataset.hpp"
#include "perturb/calibrate.hpp"

namespace gendetect::perturb {

using Net = autodiff::Network<float>;
using autodiff::Shape;
using autodiff::Tensor;

enum class SetupKind { original, gaussian, shot, impulse, fgsm, bim, deepfool, cwl2, ood };

std::string_view to_string(SetupKind kind);
std::optional<SetupKind> parse_setup_kind(std::string_view name);
bool is_noise(SetupKind kind);        // gaussian, shot, impulse
bool is_adversarial(SetupKind kind);  // fgsm, bim, deepfool, cwl2
bool is_calibrated(SetupKind kind);   // noise kinds plus fgsm and bim

// Default severity search range for a calibrated kind.
CalibrationSpec default_calibration(SetupKind kind);

struct SetupConfig {
  std::string name;
  SetupKind kind = SetupKind::original;
  std::uint64_t seed = 0;
  std::size_t count = 0;             // leading pool images to use; 0 = all
  std::optional<double> severity;    // skips calibration when set
  double target = 0.5;
  double tolerance = 0.03;
  std::size_t bim_steps = 10;
  std::size_t deepfool_max_iter = 50;
  double deepfool_overshoot = 0.02;
  double cw_c = 1.0;
  double cw_lr = 0.01;
  std::size_t cw_iters = 200;
};

struct Provenance {
  std::string name;
  SetupKind kind = SetupKind::original;
  double severity = 0;
  double achieved_rate = 0;  // misclassification rate of the perturbed pool
  bool calibrated = false;
  std::size_t calibration_iterations = 0;
  std::vector<std::pair<double, double>> calibration_trace;
  std::string source;
  std::uint64_t seed = 0;
  std::string classifier_hash;
};

// Images with binary labels (1 = misclassified or OOD, 0 = correctly
// classified in-distribution).
struct PerturbationSetup {
  Provenance provenance;
  Tensor<float> images;
  std::vector<int> labels;
  std::vector<std::int64_t> true_classes;  // -1 for OOD samples
  std::vector<std::size_t> source_index;   // index into the pool (or OOD set)

  std::size_t size() const { return labels.size(); }
  double positive_fraction() const;
};

// Perturbed copy of one image. `rng_index` selects the per-sample random stream.
std::vector<float> perturb_image(const Net& net, const SetupConfig& cfg, double severity,
                                 std::span<const float> x, std::size_t true_class,
                                 std::size_t rng_index);

// Builds a setup from the in-distribution pool (and the OOD set for kind ood).
PerturbationSetup build_setup(const SetupConfig& cfg, const Net& net, const data::Dataset& pool,
                              const data::Dataset* ood = nullptr);

// Stored as a dataset container (labels are the binary setup labels) plus
// provenance.json holding the provenance, true classes and source indices.
void save_setup(const PerturbationSetup& setup, const std::filesystem::path& dir);
PerturbationSetup load_setup(const std::filesystem::path& dir);

}  // namespace gendetect::perturb
