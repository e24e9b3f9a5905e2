#include "eval/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "data/synthetic.hpp"
#include "detectors/artifact.hpp"
#include "perturb/setup.hpp"
#include "transforms/transforms.hpp"

namespace gendetect::eval {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  require(ec == std::errc() && ptr == end, ErrorCode::invalid_argument,
          "config key '" + key + "': invalid number '" + value + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == value.size() && !value.empty(), ErrorCode::invalid_argument,
          "config key '" + key + "': invalid number '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(ErrorCode::invalid_argument, "config key '" + key + "': expected true or false, got '" +
                                        value + "'");
}

std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "data.family") c.family = value;
  else if (key == "data.ood_family") c.ood_family = value;
  else if (key == "data.image_size") c.image_size = size();
  else if (key == "data.train") c.train_count = size();
  else if (key == "data.val") c.val_count = size();
  else if (key == "data.pool") c.pool_count = size();
  else if (key == "data.ood") c.ood_count = size();
  else if (key == "classifier.preset") c.classifier_preset = value;
  else if (key == "classifier.epochs") c.classifier_epochs = size();
  else if (key == "classifier.lr") c.classifier_lr = parse_double(key, value);
  else if (key == "classifier.batch") c.classifier_batch = size();
  else if (key == "classifier.checkpoint") c.classifier_checkpoint = value;
  else if (key == "autoencoder.epochs") c.autoencoder_epochs = size();
  else if (key == "autoencoder.train") c.autoencoder_train = size();
  else if (key == "autoencoder.checkpoint") c.autoencoder_checkpoint = value;
  else if (key == "streams") c.streams = parse_list(value);
  else if (key == "detectors") c.detectors = parse_list(value);
  else if (key == "setups") c.setups = parse_list(value);
  else if (key == "seen") c.seen = value;
  else if (key == "features.per_parameter_mean") c.per_parameter_mean = parse_bool(key, value);
  else if (key == "mahalanobis.tied") c.mahalanobis_tied = parse_bool(key, value);
  else if (key == "ablation.train_all") c.ablation_train_all = parse_bool(key, value);
  else if (key == "ablation.max_per_setup") c.ablation_max_per_setup = size();
  else if (key.rfind("setup.", 0) == 0 && key.size() > 12 &&
           key.compare(key.size() - 6, 6, ".count") == 0)
    c.setup_count[key.substr(6, key.size() - 12)] = size();
  else
    fail(ErrorCode::invalid_argument, "unknown config key '" + key + "'");
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::invalid_argument,
            "config line " + std::to_string(lineno) + ": expected 'key = value'");
    try {
      set_config_value(c, trim(std::string_view(line).substr(0, eq)),
                       trim(std::string_view(line).substr(eq + 1)));
    } catch (const Error& e) {
      fail(e.code(), std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::not_found, "config not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void validate_config(const ExperimentConfig& c) {
  require(data::parse_family(c.family).has_value(), ErrorCode::invalid_argument,
          "config key 'data.family': unknown family '" + c.family + "'");
  require(data::parse_family(c.ood_family).has_value(), ErrorCode::invalid_argument,
          "config key 'data.ood_family': unknown family '" + c.ood_family + "'");
  require(c.train_count > 0 && c.val_count > 0 && c.pool_count > 0, ErrorCode::invalid_argument,
          "config keys 'data.train', 'data.val' and 'data.pool' must be positive");
  require(!c.streams.empty() && contains(c.streams, "identity"), ErrorCode::invalid_argument,
          "config key 'streams' must include identity");
  for (const auto& s : c.streams)
    require(transforms::parse_transform_kind(s).has_value(), ErrorCode::invalid_argument,
            "config key 'streams': unknown stream '" + s + "'");
  for (const auto& d : c.detectors)
    require(detectors::parse_detector_kind(d).has_value(), ErrorCode::invalid_argument,
            "config key 'detectors': unknown detector '" + d + "'");
  require(!c.setups.empty(), ErrorCode::invalid_argument, "config key 'setups' is empty");
  for (const auto& s : c.setups) {
    const auto k = perturb::parse_setup_kind(s);
    require(k.has_value(), ErrorCode::invalid_argument,
            "config key 'setups': unknown setup '" + s + "'");
    if (*k == perturb::SetupKind::ood)
      require(c.ood_count > 0, ErrorCode::invalid_argument,
              "config key 'data.ood' must be positive for the ood setup");
  }
  for (const auto& [name, count] : c.setup_count)
    require(contains(c.setups, name), ErrorCode::invalid_argument,
            "config key 'setup." + name + ".count' names an unconfigured setup");
  require(contains(c.setups, c.seen), ErrorCode::invalid_argument,
          "config key 'seen': setup '" + c.seen + "' is not in 'setups'");
}

}  // namespace gendetect::eval
