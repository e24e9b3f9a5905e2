#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "detectors/baselines.hpp"
#include "detectors/git.hpp"

namespace gendetect::detectors {

enum class DetectorKind { git, gran, gradnorm, gradnorm_all, mahalanobis };

std::string_view to_string(DetectorKind kind);
std::optional<DetectorKind> parse_detector_kind(std::string_view name);

// Any trained detector. Only the member matching `kind` is meaningful.
struct Detector {
  DetectorKind kind = DetectorKind::git;
  GitDetector git;  // git and gran
  GradNormDetector gradnorm;
  MahalanobisDetector mahalanobis;

  std::vector<double> score_batch(const Net& net, const Tensor<float>& images) const;
};

inline constexpr const char* kDetectorFormat = "gendetect-det-1";

// JSON document with the detector parameters and the hash of the classifier
// (and autoencoder, if a stream uses one) it was trained against.
void save_detector(const Detector& det, const Net& classifier, const std::filesystem::path& path);

// Rejects artifacts whose classifier hash differs from `classifier`. An
// autoencoder stream is bound to `autoencoder`, whose hash must match too.
Detector load_detector(const std::filesystem::path& path, const Net& classifier,
                       std::shared_ptr<const Net> autoencoder = nullptr);

}  // namespace gendetect::detectors
