#include "models/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "autodiff/loss.hpp"
#include "common/log.hpp"
#include "common/rng.hpp"

namespace gendetect::models {

namespace fs = std::filesystem;
using autodiff::LayerKind;
using autodiff::LayerSpec;
using nlohmann::json;

namespace {

Tensor<float> gather(const data::Dataset& ds, std::span<const std::size_t> idx) {
  const Shape shape = ds.image_shape();
  std::vector<std::span<const float>> samples;
  samples.reserve(idx.size());
  for (const std::size_t i : idx) samples.push_back(ds.image(i));
  return autodiff::stack<float>(samples, shape);
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  return 0.5 * base *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

void check_images(const data::Dataset& ds, const Shape& input_shape, const char* what) {
  require(ds.size() > 0, ErrorCode::invalid_argument, std::string(what) + " set is empty");
  require(ds.image_shape() == input_shape, ErrorCode::shape,
          std::string(what) + " images " + autodiff::shape_string(ds.image_shape()) +
              " do not match model input " + autodiff::shape_string(input_shape));
}

json layer_to_json(const LayerSpec& s) {
  json j = {{"kind", std::string(autodiff::to_string(s.kind))}};
  switch (s.kind) {
    case LayerKind::dense:
      j["in_features"] = s.in_features;
      j["out_features"] = s.out_features;
      j["bias"] = s.bias;
      break;
    case LayerKind::conv2d:
    case LayerKind::conv_transpose2d:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["padding"] = s.padding;
      j["bias"] = s.bias;
      break;
    case LayerKind::max_pool2d:
      j["kernel"] = s.kernel;
      break;
    default:
      break;
  }
  return j;
}

std::size_t header_size(const json& j, const char* key) {
  require(j.contains(key) && j[key].is_number_unsigned(), ErrorCode::format,
          std::string("checkpoint header field '") + key + "' is missing or invalid");
  return j[key].get<std::size_t>();
}

LayerSpec layer_from_json(const json& j) {
  require(j.contains("kind") && j["kind"].is_string(), ErrorCode::format,
          "checkpoint header field 'layers[].kind' is missing");
  const auto kind = autodiff::parse_layer_kind(j["kind"].get<std::string>());
  require(kind.has_value(), ErrorCode::format,
          "checkpoint header field 'layers[].kind' has unknown value " + j["kind"].dump());
  switch (*kind) {
    case LayerKind::dense:
      return LayerSpec::dense(header_size(j, "in_features"), header_size(j, "out_features"),
                              j.value("bias", true));
    case LayerKind::conv2d:
    case LayerKind::conv_transpose2d: {
      LayerSpec s = LayerSpec::conv2d(header_size(j, "in_channels"), header_size(j, "out_channels"),
                                      header_size(j, "kernel"), header_size(j, "stride"),
                                      header_size(j, "padding"), j.value("bias", true));
      s.kind = *kind;
      return s;
    }
    case LayerKind::max_pool2d:
      return LayerSpec::max_pool2d(header_size(j, "kernel"));
    default:
      return LayerSpec{.kind = *kind};
  }
}

json architecture_json(const Net& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) layers.push_back(layer_to_json(l));
  return {{"input_shape", net.input_shape()}, {"layers", layers}};
}

std::vector<float> flatten_params(const Net& net) {
  std::vector<float> out;
  out.reserve(net.parameter_count());
  for (const auto& p : net.params()) {
    out.insert(out.end(), p.weight.data().begin(), p.weight.data().end());
    out.insert(out.end(), p.bias.data().begin(), p.bias.data().end());
  }
  return out;
}

}  // namespace

std::vector<LayerSpec> classifier_layers(const std::string& preset, const Shape& input_shape,
                                         std::size_t num_classes) {
  require(num_classes >= 2, ErrorCode::invalid_argument, "classifier needs at least 2 classes");
  require(input_shape.size() == 3, ErrorCode::shape, "classifier input must be (C,H,W)");
  if (preset == "smallcnn-v1") {
    const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    require(h % 4 == 0 && w % 4 == 0, ErrorCode::shape,
            "smallcnn-v1 needs spatial dims divisible by 4");
    return {
        LayerSpec::conv2d(c, 8, 3, 1, 1),  LayerSpec::relu(), LayerSpec::max_pool2d(2),
        LayerSpec::conv2d(8, 16, 3, 1, 1), LayerSpec::relu(), LayerSpec::max_pool2d(2),
        LayerSpec::flatten(),              LayerSpec::dense(16 * (h / 4) * (w / 4), 32),
        LayerSpec::relu(),                 LayerSpec::dense(32, num_classes),
    };
  }
  fail(ErrorCode::invalid_argument, "unknown classifier preset: " + preset);
}

std::vector<LayerSpec> autoencoder_layers(const Shape& s) {
  require(s.size() == 3 && s[0] == 3, ErrorCode::shape,
          "autoencoder expects 3-channel images, got " + autodiff::shape_string(s));
  require(s[1] % 8 == 0 && s[2] % 8 == 0, ErrorCode::shape,
          "autoencoder needs height and width divisible by 8, got " + autodiff::shape_string(s));
  return {
      LayerSpec::conv2d(3, 12, 4, 2, 1),            LayerSpec::relu(),
      LayerSpec::conv2d(12, 24, 4, 2, 1),           LayerSpec::relu(),
      LayerSpec::conv2d(24, 48, 4, 2, 1),           LayerSpec::relu(),
      LayerSpec::conv_transpose2d(48, 24, 4, 2, 1), LayerSpec::relu(),
      LayerSpec::conv_transpose2d(24, 12, 4, 2, 1), LayerSpec::relu(),
      LayerSpec::conv_transpose2d(12, 3, 4, 2, 1),  LayerSpec::sigmoid(),
  };
}

void kaiming_init(Net& net, std::uint64_t seed) {
  auto& params = net.mutable_params();
  for (std::size_t l = 0; l < params.size(); ++l) {
    const LayerSpec& spec = net.layers()[net.param_layer(l)];
    Rng rng = make_rng(seed, "kaiming", l);
    std::normal_distribution<float> dist(
        0.0f, static_cast<float>(std::sqrt(2.0 / static_cast<double>(spec.fan_in()))));
    for (auto& v : params[l].weight.storage()) v = dist(rng);
    params[l].bias.fill(0.0f);
  }
}

Net make_classifier(const ClassifierConfig& config) {
  Net net(config.input_shape,
          classifier_layers(config.preset, config.input_shape, config.num_classes));
  kaiming_init(net, config.seed);
  return net;
}

Net make_autoencoder(const AutoencoderConfig& config) {
  Net net(config.input_shape, autoencoder_layers(config.input_shape));
  kaiming_init(net, config.seed);
  return net;
}

Net train_classifier(const ClassifierConfig& config, const data::Dataset& train,
                     const data::Dataset& val, TrainingReport* report) {
  check_images(train, config.input_shape, "training");
  require(config.batch_size > 0, ErrorCode::invalid_argument, "batch size must be positive");
  for (const auto l : train.labels)
    require(l < config.num_classes, ErrorCode::invalid_argument,
            "training label " + std::to_string(l) + " is outside the class range");
  Net net = make_classifier(config);

  const std::size_t n = train.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.epochs;
  auto velocity = net.zero_gradients();
  std::vector<double> epoch_loss;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng = make_rng(config.seed, "classifier-shuffle", epoch);
    const auto order = shuffled(n, rng);
    double loss_sum = 0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      std::vector<std::size_t> classes;
      for (const auto i : idx) classes.push_back(train.labels[i]);

      autodiff::Tape<float> tape;
      const auto logits = net.forward(gather(train, idx), &tape);
      const auto ce = autodiff::cross_entropy(logits, autodiff::one_hot<float>(classes, config.num_classes));
      if (!std::isfinite(ce.loss))
        fail(ErrorCode::numeric, "classifier training diverged: loss is " +
                                     std::to_string(ce.loss) + " at epoch " +
                                     std::to_string(epoch) + ", batch " + std::to_string(b));
      const auto grads = net.backward(tape, ce.grad);
      loss_sum += static_cast<double>(ce.loss) * static_cast<double>(idx.size());

      const float lr = static_cast<float>(cosine_lr(config.learning_rate, step, total_steps));
      const float mu = static_cast<float>(config.momentum);
      auto& params = net.mutable_params();
      for (std::size_t l = 0; l < params.size(); ++l) {
        auto update = [&](Tensor<float>& w, Tensor<float>& v, const Tensor<float>& g) {
          for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = mu * v[i] + g[i];
            w[i] -= lr * v[i];
          }
        };
        update(params[l].weight, velocity.blocks[l].weight, grads.blocks[l].weight);
        update(params[l].bias, velocity.blocks[l].bias, grads.blocks[l].bias);
      }
    }
    epoch_loss.push_back(loss_sum / static_cast<double>(n));
    log::debug("classifier epoch " + std::to_string(epoch) + " loss " +
               std::to_string(epoch_loss.back()));
  }
  if (report) {
    report->epoch_loss = epoch_loss;
    report->train_accuracy = accuracy(net, train);
    report->val_accuracy = val.size() > 0 ? accuracy(net, val) : 0.0;
  }
  return net;
}

Net train_autoencoder(const AutoencoderConfig& config, const data::Dataset& train,
                      std::vector<double>* epoch_loss) {
  // Validates the 3-channel / divisible-by-8 geometry before anything else.
  Net net = make_autoencoder(config);
  check_images(train, config.input_shape, "autoencoder training");
  require(config.batch_size > 0, ErrorCode::invalid_argument, "batch size must be positive");

  auto m = net.zero_gradients();
  auto v = net.zero_gradients();
  const std::size_t n = train.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const double b1 = config.beta1, b2 = config.beta2, eps = 1e-8;
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng = make_rng(config.seed, "autoencoder-shuffle", epoch);
    const auto order = shuffled(n, rng);
    double loss_sum = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const auto batch = gather(train, idx);
      autodiff::Tape<float> tape;
      const auto out = net.forward(batch, &tape);
      const auto bce = autodiff::binary_cross_entropy(out, batch);
      if (!std::isfinite(bce.loss))
        fail(ErrorCode::numeric, "autoencoder training diverged at epoch " + std::to_string(epoch));
      const auto grads = net.backward(tape, bce.grad);
      loss_sum += static_cast<double>(bce.loss) * static_cast<double>(idx.size());

      ++t;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
      const double lr = config.learning_rate;
      auto& params = net.mutable_params();
      auto adam = [&](Tensor<float>& w, Tensor<float>& mm, Tensor<float>& vv, const Tensor<float>& g) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          mm[i] = static_cast<float>(b1 * mm[i] + (1.0 - b1) * g[i]);
          vv[i] = static_cast<float>(b2 * vv[i] + (1.0 - b2) * g[i] * g[i]);
          const double mhat = mm[i] / c1, vhat = vv[i] / c2;
          w[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
        }
      };
      for (std::size_t l = 0; l < params.size(); ++l) {
        adam(params[l].weight, m.blocks[l].weight, v.blocks[l].weight, grads.blocks[l].weight);
        adam(params[l].bias, m.blocks[l].bias, v.blocks[l].bias, grads.blocks[l].bias);
      }
    }
    if (epoch_loss) epoch_loss->push_back(loss_sum / static_cast<double>(n));
    log::debug("autoencoder epoch " + std::to_string(epoch) + " bce " +
               std::to_string(loss_sum / static_cast<double>(n)));
  }
  return net;
}

std::vector<Prediction> predict(const Net& net, const Tensor<float>& batch) {
  const auto logits = net.forward(batch);
  require(logits.rank() == 2, ErrorCode::shape, "predict expects a network with flat logits");
  const auto probs = autodiff::softmax(logits);
  std::vector<Prediction> out(logits.dim(0));
  for (std::size_t s = 0; s < out.size(); ++s) {
    const auto row = probs.sample(s);
    out[s].label = autodiff::argmax(logits.sample(s));
    out[s].probabilities.assign(row.begin(), row.end());
  }
  return out;
}

std::vector<std::size_t> predict_labels(const Net& net, const Tensor<float>& images,
                                        std::size_t chunk) {
  require(images.rank() >= 2, ErrorCode::shape, "predict_labels expects a batch");
  const std::size_t n = images.dim(0);
  const Shape sample_shape(images.shape().begin() + 1, images.shape().end());
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    std::vector<std::span<const float>> samples;
    for (std::size_t i = begin; i < end; ++i) samples.push_back(images.sample(i));
    const auto logits = net.forward(autodiff::stack<float>(samples, sample_shape));
    for (std::size_t s = 0; s < end - begin; ++s) out.push_back(autodiff::argmax(logits.sample(s)));
  }
  return out;
}

double accuracy(const Net& net, const data::Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  const auto labels = predict_labels(net, ds.images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Tensor<float> reconstruct(const Net& ae, const Tensor<float>& batch) {
  auto out = ae.forward(batch);
  require(out.shape() == batch.shape(), ErrorCode::shape,
          "autoencoder output shape differs from its input");
  constexpr float lo = 1e-6f, hi = 1.0f - 1e-6f;
  for (auto& v : out.storage()) v = std::clamp(v, lo, hi);
  return out;
}

ReconstructionError reconstruction_error(const Net& ae, const data::Dataset& ds) {
  ReconstructionError err;
  const std::size_t n = ds.size(), chunk = 64;
  double bce = 0, mae = 0;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(n, begin + chunk); ++i) idx.push_back(i);
    const auto batch = gather(ds, idx);
    const auto out = reconstruct(ae, batch);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double p = out[i], t = batch[i];
      bce -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
      mae += std::abs(p - t);
    }
  }
  const double total = static_cast<double>(ds.images.size());
  err.bce = bce / total;
  err.mae = mae / total;
  return err;
}

void save_checkpoint(const Net& net, const CheckpointMeta& meta, const fs::path& path) {
  json header = architecture_json(net);
  header["format"] = kCheckpointFormat;
  header["payload_floats"] = net.parameter_count();
  header["metadata"] = {
      {"role", meta.role},     {"preset", meta.preset}, {"num_classes", meta.num_classes},
      {"seed", meta.seed},     {"epochs", meta.epochs}, {"final_accuracy", meta.final_accuracy},
  };
  const std::string text = header.dump();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write checkpoint: " + path.string());
  out << kCheckpointFormat << '\n' << text.size() << '\n' << text;
  const auto payload = flatten_params(net);
  data::write_f32_le(out, payload);
  require(static_cast<bool>(out), ErrorCode::io, "failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(fs::is_regular_file(path) && static_cast<bool>(in), ErrorCode::not_found,
          "checkpoint not found: " + path.string());
  std::string tag, len_line;
  std::getline(in, tag);
  require(tag == kCheckpointFormat, ErrorCode::format,
          std::string("checkpoint format version mismatch: expected ") + kCheckpointFormat +
              ", found '" + tag.substr(0, 32) + "'");
  std::getline(in, len_line);
  std::size_t header_len = 0;
  try {
    header_len = std::stoul(len_line);
  } catch (const std::exception&) {
    fail(ErrorCode::format, "checkpoint header length line is invalid");
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  require(static_cast<std::size_t>(in.gcount()) == header_len, ErrorCode::format,
          "checkpoint header is truncated");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  require(header.value("format", std::string{}) == kCheckpointFormat, ErrorCode::format,
          "checkpoint header field 'format' does not match the file tag");
  require(header.contains("input_shape") && header["input_shape"].is_array(), ErrorCode::format,
          "checkpoint header field 'input_shape' is missing");
  require(header.contains("layers") && header["layers"].is_array(), ErrorCode::format,
          "checkpoint header field 'layers' is missing");
  Shape input_shape;
  for (const auto& d : header["input_shape"]) {
    require(d.is_number_unsigned(), ErrorCode::format, "checkpoint header field 'input_shape' is invalid");
    input_shape.push_back(d.get<std::size_t>());
  }
  std::vector<LayerSpec> layers;
  for (const auto& l : header["layers"]) layers.push_back(layer_from_json(l));
  Net net(input_shape, layers);

  const std::size_t declared = header_size(header, "payload_floats");
  require(declared == net.parameter_count(), ErrorCode::format,
          "checkpoint header field 'payload_floats' (" + std::to_string(declared) +
              ") does not match the architecture's parameter count (" +
              std::to_string(net.parameter_count()) + ")");

  const std::vector<char> payload(std::istreambuf_iterator<char>(in), {});
  require(payload.size() == declared * 4, ErrorCode::format,
          "checkpoint payload length is " + std::to_string(payload.size()) + " bytes, expected " +
              std::to_string(declared * 4));
  std::size_t offset = 0;
  auto read_into = [&](Tensor<float>& t) {
    for (auto& v : t.storage()) {
      std::uint32_t u;
      std::memcpy(&u, payload.data() + offset, 4);
      if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
      std::memcpy(&v, &u, 4);
      offset += 4;
    }
  };
  for (auto& p : net.mutable_params()) {
    read_into(p.weight);
    read_into(p.bias);
  }

  Checkpoint ckpt{std::move(net), {}};
  if (header.contains("metadata") && header["metadata"].is_object()) {
    const auto& m = header["metadata"];
    ckpt.meta.role = m.value("role", std::string{});
    ckpt.meta.preset = m.value("preset", std::string{});
    ckpt.meta.num_classes = m.value("num_classes", std::size_t{0});
    ckpt.meta.seed = m.value("seed", std::uint64_t{0});
    ckpt.meta.epochs = m.value("epochs", std::size_t{0});
    ckpt.meta.final_accuracy = m.value("final_accuracy", 0.0);
  }
  return ckpt;
}

std::string network_hash(const Net& net) {
  std::uint64_t h = fnv1a(architecture_json(net).dump());
  for (const float v : flatten_params(net)) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    for (int k = 0; k < 4; ++k) {
      h ^= (u >> (8 * k)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gendetect::models
