#include "detectors/artifact.hpp"

#include <fstream>
#include <json.hpp>

#include "models/models.hpp"

namespace gendetect::detectors {

using json = nlohmann::json;

namespace {

constexpr DetectorKind kAllKinds[] = {DetectorKind::git, DetectorKind::gran,
                                      DetectorKind::gradnorm, DetectorKind::gradnorm_all,
                                      DetectorKind::mahalanobis};

json head_json(const LogisticHead& h) {
  return {{"mean", h.mean},     {"std", h.stddev},          {"weight", h.weight},
          {"bias", h.bias},     {"trained_on", h.trained_on}};
}

template <class T>
T field(const json& j, const char* key) {
  require(j.is_object() && j.contains(key), ErrorCode::format,
          std::string("detector artifact: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::format, std::string("detector artifact: invalid field '") + key + "'");
  }
}

LogisticHead head_from_json(const json& j) {
  LogisticHead h;
  h.mean = field<std::vector<double>>(j, "mean");
  h.stddev = field<std::vector<double>>(j, "std");
  h.weight = field<std::vector<double>>(j, "weight");
  h.bias = field<double>(j, "bias");
  h.trained_on = field<std::size_t>(j, "trained_on");
  require(h.mean.size() == h.weight.size() && h.stddev.size() == h.weight.size(),
          ErrorCode::format, "detector artifact: field 'weight' length mismatch");
  for (const double s : h.stddev)
    require(s > 0, ErrorCode::format, "detector artifact: field 'std' must be positive");
  return h;
}

json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) rows[static_cast<std::size_t>(r)].push_back(m(r, c));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
  std::vector<std::vector<double>> rows;
  try {
    rows = j.get<std::vector<std::vector<double>>>();
  } catch (const json::exception&) {
    fail(ErrorCode::format, std::string("detector artifact: invalid field '") + what + "'");
  }
  require(!rows.empty() && !rows[0].empty(), ErrorCode::format,
          std::string("detector artifact: empty field '") + what + "'");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == rows[0].size(), ErrorCode::format,
            std::string("detector artifact: ragged field '") + what + "'");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::git: return "git";
    case DetectorKind::gran: return "gran";
    case DetectorKind::gradnorm: return "gradnorm";
    case DetectorKind::gradnorm_all: return "gradnorm_all";
    case DetectorKind::mahalanobis: return "mahalanobis";
  }
  return "unknown";
}

std::optional<DetectorKind> parse_detector_kind(std::string_view name) {
  for (const auto k : kAllKinds)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::vector<double> Detector::score_batch(const Net& net, const Tensor<float>& images) const {
  switch (kind) {
    case DetectorKind::git:
    case DetectorKind::gran:
      return git.score_batch(net, images);
    case DetectorKind::gradnorm:
    case DetectorKind::gradnorm_all:
      return gradnorm.score_batch(net, images);
    case DetectorKind::mahalanobis:
      return mahalanobis.score_batch(net, images);
  }
  fail(ErrorCode::internal, "unknown detector kind");
}

void save_detector(const Detector& det, const Net& classifier, const std::filesystem::path& path) {
  json j;
  j["format"] = kDetectorFormat;
  j["kind"] = std::string(to_string(det.kind));
  j["classifier_hash"] = models::network_hash(classifier);
  switch (det.kind) {
    case DetectorKind::git:
    case DetectorKind::gran: {
      json streams = json::array();
      for (const auto& s : det.git.streams) {
        json e{{"transform", std::string(transforms::to_string(s.transform.kind))},
               {"param", s.transform.param},
               {"val_auroc", s.val_auroc},
               {"head", head_json(s.head)}};
        if (s.transform.kind == TransformKind::autoencoder)
          e["autoencoder_hash"] = models::network_hash(*s.transform.autoencoder);
        streams.push_back(std::move(e));
      }
      j["streams"] = std::move(streams);
      j["fusion"] = head_json(det.git.fusion);
      j["per_parameter_mean"] = det.git.features.per_parameter_mean;
      break;
    }
    case DetectorKind::gradnorm:
      break;
    case DetectorKind::gradnorm_all:
      j["head"] = head_json(det.gradnorm.head);
      break;
    case DetectorKind::mahalanobis: {
      json layers = json::array();
      for (const auto& l : det.mahalanobis.layers) {
        json covs = json::array();
        for (const auto& c : l.covariances()) covs.push_back(matrix_json(c));
        layers.push_back({{"means", matrix_json(l.means())}, {"covariances", std::move(covs)}});
      }
      j["layers"] = std::move(layers);
      j["epsilon"] = det.mahalanobis.epsilon;
      j["head"] = head_json(det.mahalanobis.head);
      break;
    }
  }
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << j.dump(1) << '\n';
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

Detector load_detector(const std::filesystem::path& path, const Net& classifier,
                       std::shared_ptr<const Net> autoencoder) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::not_found, "detector not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "detector artifact is not valid JSON: " + std::string(e.what()));
  }
  require(field<std::string>(j, "format") == kDetectorFormat, ErrorCode::format,
          "detector artifact: field 'format' version mismatch");
  const auto kind = parse_detector_kind(field<std::string>(j, "kind"));
  require(kind.has_value(), ErrorCode::format, "detector artifact: unknown field 'kind' value");
  const auto hash = field<std::string>(j, "classifier_hash");
  require(hash == models::network_hash(classifier), ErrorCode::state,
          "detector artifact: classifier hash mismatch (artifact " + hash + ", classifier " +
              models::network_hash(classifier) + ")");

  Detector det;
  det.kind = *kind;
  switch (det.kind) {
    case DetectorKind::git:
    case DetectorKind::gran:
      for (const auto& e : field<json>(j, "streams")) {
        GitStream s;
        const auto tk = transforms::parse_transform_kind(field<std::string>(e, "transform"));
        require(tk.has_value(), ErrorCode::format, "detector artifact: unknown field 'transform'");
        s.transform = {*tk, field<double>(e, "param"), nullptr};
        if (*tk == TransformKind::autoencoder) {
          require(autoencoder != nullptr, ErrorCode::invalid_argument,
                  "detector uses an autoencoder stream but no autoencoder was given");
          require(field<std::string>(e, "autoencoder_hash") == models::network_hash(*autoencoder),
                  ErrorCode::state, "detector artifact: autoencoder hash mismatch");
          s.transform.autoencoder = autoencoder;
        }
        s.val_auroc = field<double>(e, "val_auroc");
        s.head = head_from_json(field<json>(e, "head"));
        require(s.head.dim() == classifier.param_layer_count(), ErrorCode::format,
                "detector artifact: stream head size does not match the classifier");
        det.git.streams.push_back(std::move(s));
      }
      det.git.fusion = head_from_json(field<json>(j, "fusion"));
      det.git.features.per_parameter_mean = field<bool>(j, "per_parameter_mean");
      require(det.git.fusion.dim() == det.git.streams.size(), ErrorCode::format,
              "detector artifact: fusion head size does not match the stream count");
      break;
    case DetectorKind::gradnorm:
      det.gradnorm.all_layers = false;
      break;
    case DetectorKind::gradnorm_all:
      det.gradnorm.all_layers = true;
      det.gradnorm.head = head_from_json(field<json>(j, "head"));
      break;
    case DetectorKind::mahalanobis:
      for (const auto& l : field<json>(j, "layers")) {
        std::vector<Eigen::MatrixXd> covs;
        for (const auto& c : field<json>(l, "covariances"))
          covs.push_back(matrix_from_json(c, "covariances"));
        det.mahalanobis.layers.emplace_back(matrix_from_json(field<json>(l, "means"), "means"),
                                            std::move(covs));
      }
      det.mahalanobis.epsilon = field<double>(j, "epsilon");
      det.mahalanobis.head = head_from_json(field<json>(j, "head"));
      break;
  }
  return det;
}

}  // namespace gendetect::detectors
