#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "autodiff/network.hpp"
#include "data/dataset.hpp"

namespace gendetect::models {

using autodiff::Network;
using autodiff::Shape;
using autodiff::Tensor;
using Net = Network<float>;

struct ClassifierConfig {
  Shape input_shape{3, 32, 32};
  std::size_t num_classes = 4;
  std::string preset = "smallcnn-v1";
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct AutoencoderConfig {
  Shape input_shape{3, 32, 32};
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainingReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0;
  double val_accuracy = 0;
};

struct Prediction {
  std::size_t label = 0;
  std::vector<float> probabilities;
};

// Layer table for a named preset. "smallcnn-v1": two conv(3x3, pad 1)+relu+
// maxpool(2) blocks with 8 and 16 channels, then dense(32)+relu+dense(classes).
std::vector<autodiff::LayerSpec> classifier_layers(const std::string& preset,
                                                   const Shape& input_shape,
                                                   std::size_t num_classes);

// Encoder: three conv(4x4, stride 2, pad 1)+relu stages 3->12->24->48.
// Decoder mirrors it with transposed convolutions and ends in a sigmoid.
std::vector<autodiff::LayerSpec> autoencoder_layers(const Shape& input_shape);

// Kaiming-normal weights (std = sqrt(2 / fan_in)), zero biases.
void kaiming_init(Net& net, std::uint64_t seed);

Net make_classifier(const ClassifierConfig& config);
Net make_autoencoder(const AutoencoderConfig& config);

// SGD with momentum and a cosine-decayed learning rate over mean
// cross-entropy. Throws ErrorCode::numeric if the loss becomes non-finite.
Net train_classifier(const ClassifierConfig& config, const data::Dataset& train,
                     const data::Dataset& val, TrainingReport* report = nullptr);

// Adam over mean per-pixel binary cross-entropy between input and output.
Net train_autoencoder(const AutoencoderConfig& config, const data::Dataset& train,
                      std::vector<double>* epoch_loss = nullptr);

std::vector<Prediction> predict(const Net& net, const Tensor<float>& batch);
// Predicted labels only; processes the images in chunks.
std::vector<std::size_t> predict_labels(const Net& net, const Tensor<float>& images,
                                        std::size_t chunk = 128);
double accuracy(const Net& net, const data::Dataset& ds);

// Autoencoder reconstruction with every value clamped into the open (0,1).
Tensor<float> reconstruct(const Net& ae, const Tensor<float>& batch);
// Mean per-pixel BCE and mean absolute error of reconstructions.
struct ReconstructionError {
  double bce = 0;
  double mae = 0;
};
ReconstructionError reconstruction_error(const Net& ae, const data::Dataset& ds);

// ---- checkpoints ----

inline constexpr const char* kCheckpointFormat = "gendetect-ckpt-1";

struct CheckpointMeta {
  std::string role;  // "classifier" or "autoencoder"
  std::string preset;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double final_accuracy = 0;
};

struct Checkpoint {
  Net net;
  CheckpointMeta meta;
};

// File layout: line 1 the format tag, line 2 the byte length of a JSON header
// (architecture + metadata + payload_floats), the header itself, then the
// little-endian float32 weights in layer order (weight block, then bias).
void save_checkpoint(const Net& net, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Stable 64-bit fingerprint of architecture and weights, as 16 hex digits.
std::string network_hash(const Net& net);

}  // namespace gendetect::models
