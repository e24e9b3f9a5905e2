#include "perturb/setup.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "common/log.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"
#include "models/models.hpp"
#include "perturb/attacks.hpp"
#include "perturb/noise.hpp"

namespace gendetect::perturb {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr SetupKind kAllKinds[] = {SetupKind::original, SetupKind::gaussian, SetupKind::shot,
                                   SetupKind::impulse,  SetupKind::fgsm,     SetupKind::bim,
                                   SetupKind::deepfool, SetupKind::cwl2,     SetupKind::ood};

std::size_t predict_one(const Net& net, std::span<const float> x) {
  return autodiff::argmax<float>(net.forward(autodiff::as_batch(x, net.input_shape())).data());
}

struct Perturbed {
  Tensor<float> images;
  std::vector<int> wrong;
};

Perturbed perturb_pool(const Net& net, const SetupConfig& cfg, double severity,
                       const data::Dataset& pool, std::size_t n,
                       const std::vector<char>* attack_mask = nullptr) {
  Shape shape{n};
  const Shape s = pool.image_shape();
  shape.insert(shape.end(), s.begin(), s.end());
  Perturbed p{Tensor<float>(shape), std::vector<int>(n, 0)};
  parallel_for(n, [&](std::size_t i) {
    const bool attack = attack_mask == nullptr || (*attack_mask)[i];
    const auto x = pool.image(i);
    const auto out = attack ? perturb_image(net, cfg, severity, x, pool.labels[i], i)
                            : std::vector<float>(x.begin(), x.end());
    std::copy(out.begin(), out.end(), p.images.sample(i).begin());
    p.wrong[i] = predict_one(net, p.images.sample(i)) != pool.labels[i] ? 1 : 0;
  });
  return p;
}

double mean_of(const std::vector<int>& v) {
  return v.empty() ? 0.0
                   : static_cast<double>(std::accumulate(v.begin(), v.end(), 0)) /
                         static_cast<double>(v.size());
}

void check_both_labels(const PerturbationSetup& s) {
  const auto pos = std::count(s.labels.begin(), s.labels.end(), 1);
  require(pos > 0, ErrorCode::invalid_argument,
          "setup '" + s.provenance.name + "' has no positive (misclassified or OOD) samples");
  require(pos < static_cast<long>(s.labels.size()), ErrorCode::invalid_argument,
          "setup '" + s.provenance.name + "' has no negative (correctly classified) samples");
}

// Random choice of k indices out of `from`, returned in ascending order.
std::vector<std::size_t> choose(std::vector<std::size_t> from, std::size_t k, Rng& rng) {
  std::shuffle(from.begin(), from.end(), rng);
  from.resize(std::min(k, from.size()));
  std::sort(from.begin(), from.end());
  return from;
}

void append(PerturbationSetup& s, std::span<const float> img, int label, std::int64_t cls,
            std::size_t src, std::vector<float>& buf) {
  buf.insert(buf.end(), img.begin(), img.end());
  s.labels.push_back(label);
  s.true_classes.push_back(cls);
  s.source_index.push_back(src);
}

Tensor<float> batch_from(std::vector<float> buf, std::size_t n, const Shape& sample) {
  Shape shape{n};
  shape.insert(shape.end(), sample.begin(), sample.end());
  return Tensor<float>(std::move(shape), std::move(buf));
}

}  // namespace

std::string_view to_string(SetupKind kind) {
  switch (kind) {
    case SetupKind::original: return "original";
    case SetupKind::gaussian: return "gaussian";
    case SetupKind::shot: return "shot";
    case SetupKind::impulse: return "impulse";
    case SetupKind::fgsm: return "fgsm";
    case SetupKind::bim: return "bim";
    case SetupKind::deepfool: return "deepfool";
    case SetupKind::cwl2: return "cwl2";
    case SetupKind::ood: return "ood";
  }
  return "unknown";
}

std::optional<SetupKind> parse_setup_kind(std::string_view name) {
  for (const auto k : kAllKinds)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

bool is_noise(SetupKind k) {
  return k == SetupKind::gaussian || k == SetupKind::shot || k == SetupKind::impulse;
}

bool is_adversarial(SetupKind k) {
  return k == SetupKind::fgsm || k == SetupKind::bim || k == SetupKind::deepfool ||
         k == SetupKind::cwl2;
}

bool is_calibrated(SetupKind k) { return is_noise(k) || k == SetupKind::fgsm || k == SetupKind::bim; }

CalibrationSpec default_calibration(SetupKind kind) {
  CalibrationSpec c;
  switch (kind) {
    case SetupKind::gaussian:
    case SetupKind::impulse:
      c.lower = 1e-4;
      c.upper = 0.5;
      break;
    case SetupKind::shot:
      c.lower = 5;
      c.upper = 5000;
      c.log_scale = true;
      c.decreasing = true;
      break;
    case SetupKind::fgsm:
    case SetupKind::bim:
      c.lower = 1e-5;
      c.upper = 0.3;
      break;
    default:
      fail(ErrorCode::invalid_argument,
           "setup kind '" + std::string(to_string(kind)) + "' is not calibrated");
  }
  return c;
}

double PerturbationSetup::positive_fraction() const {
  return labels.empty() ? 0.0 : mean_of(labels);
}

std::vector<float> perturb_image(const Net& net, const SetupConfig& cfg, double severity,
                                 std::span<const float> x, std::size_t true_class,
                                 std::size_t rng_index) {
  Rng rng = make_rng(cfg.seed, "setup/" + cfg.name, rng_index);
  const auto sev = static_cast<float>(severity);
  switch (cfg.kind) {
    case SetupKind::gaussian: return gaussian_noise(x, severity, rng);
    case SetupKind::shot: return shot_noise(x, severity, rng);
    case SetupKind::impulse: return impulse_noise(x, severity, rng);
    case SetupKind::fgsm: return fgsm<float>(net, x, true_class, sev);
    case SetupKind::bim: return bim<float>(net, x, true_class, sev, cfg.bim_steps);
    case SetupKind::deepfool:
      return deepfool<float>(net, x, true_class, cfg.deepfool_max_iter,
                             static_cast<float>(cfg.deepfool_overshoot))
          .image;
    case SetupKind::cwl2:
      return cwl2<float>(net, x, true_class, static_cast<float>(cfg.cw_c),
                         static_cast<float>(cfg.cw_lr), cfg.cw_iters)
          .image;
    case SetupKind::original:
    case SetupKind::ood:
      return std::vector<float>(x.begin(), x.end());
  }
  fail(ErrorCode::internal, "unknown setup kind");
}

PerturbationSetup build_setup(const SetupConfig& cfg, const Net& net, const data::Dataset& pool,
                              const data::Dataset* ood) {
  require(!cfg.name.empty(), ErrorCode::invalid_argument, "setup needs a name");
  require(pool.image_shape() == net.input_shape(), ErrorCode::shape,
          "pool images do not match the classifier input");
  const std::size_t n = cfg.count == 0 ? pool.size() : std::min(cfg.count, pool.size());
  require(n > 0, ErrorCode::invalid_argument, "setup pool is empty");

  PerturbationSetup s;
  auto& prov = s.provenance;
  prov.name = cfg.name;
  prov.kind = cfg.kind;
  prov.seed = cfg.seed;
  prov.source = pool.name;
  prov.classifier_hash = models::network_hash(net);
  const Shape sample = pool.image_shape();
  std::vector<float> buf;

  if (cfg.kind == SetupKind::original || cfg.kind == SetupKind::ood) {
    const auto clean = perturb_pool(net, cfg, 0.0, pool, n);  // kinds without perturbation
    std::vector<std::size_t> wrong, right;
    for (std::size_t i = 0; i < n; ++i) (clean.wrong[i] ? wrong : right).push_back(i);
    Rng rng = make_rng(cfg.seed, "setup/" + cfg.name + "/choose");
    prov.achieved_rate = mean_of(clean.wrong);
    if (cfg.kind == SetupKind::original) {
      require(!wrong.empty(), ErrorCode::invalid_argument,
              "setup '" + cfg.name + "' has no positive (misclassified) samples");
      std::vector<std::size_t> picked =
          wrong.size() > right.size() ? choose(wrong, right.size(), rng) : wrong;
      const auto negatives = choose(right, picked.size(), rng);
      picked.insert(picked.end(), negatives.begin(), negatives.end());
      std::sort(picked.begin(), picked.end());
      for (const auto i : picked)
        append(s, pool.image(i), clean.wrong[i], pool.labels[i], i, buf);
    } else {
      require(ood != nullptr && ood->size() > 0, ErrorCode::invalid_argument,
              "setup '" + cfg.name + "' needs an out-of-distribution dataset");
      require(ood->image_shape() == sample, ErrorCode::shape,
              "OOD images do not match the classifier input");
      prov.source += "+" + ood->name;
      const std::size_t k = std::min(ood->size(), right.size());
      require(k > 0, ErrorCode::invalid_argument,
              "setup '" + cfg.name + "' has no correctly classified in-distribution samples");
      const auto negatives = choose(right, k, rng);
      for (std::size_t i = 0; i < k; ++i) append(s, ood->image(i), 1, -1, i, buf);
      for (const auto i : negatives) append(s, pool.image(i), 0, pool.labels[i], i, buf);
    }
    s.images = batch_from(std::move(buf), s.labels.size(), sample);
    check_both_labels(s);
    return s;
  }

  std::vector<char> mask;
  double severity = cfg.severity.value_or(0.0);
  if (cfg.kind == SetupKind::deepfool || cfg.kind == SetupKind::cwl2) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    Rng rng = make_rng(cfg.seed, "setup/" + cfg.name + "/half");
    mask.assign(n, 0);
    for (const auto i : choose(all, n / 2, rng)) mask[i] = 1;
  } else if (!cfg.severity) {
    const std::vector<char> none(n, 0);
    const double clean_rate = mean_of(perturb_pool(net, cfg, 0.0, pool, n, &none).wrong);
    CalibrationSpec spec = default_calibration(cfg.kind);
    spec.target = cfg.target;
    spec.tolerance = cfg.tolerance;
    const auto cal = calibrate_severity(
        [&](double sev) {
          const double r = mean_of(perturb_pool(net, cfg, sev, pool, n).wrong);
          log::debug("calibrate " + cfg.name + ": severity " + std::to_string(sev) + " rate " +
                     std::to_string(r));
          return r;
        },
        clean_rate, spec);
    severity = cal.severity;
    prov.calibrated = true;
    prov.calibration_iterations = cal.iterations;
    prov.calibration_trace = cal.trace;
    log::info("setup " + cfg.name + ": severity " + std::to_string(severity) + " rate " +
              std::to_string(cal.rate));
  }
  prov.severity = severity;
  // clean error already at the target: the setup keeps the clean images
  if (prov.calibrated && severity == 0.0) mask.assign(n, 0);
  const auto p = perturb_pool(net, cfg, severity, pool, n, mask.empty() ? nullptr : &mask);
  s.images = std::move(p.images);
  s.labels = p.wrong;
  for (std::size_t i = 0; i < n; ++i) {
    s.true_classes.push_back(pool.labels[i]);
    s.source_index.push_back(i);
  }
  prov.achieved_rate = mean_of(p.wrong);
  check_both_labels(s);
  return s;
}

void save_setup(const PerturbationSetup& setup, const fs::path& dir) {
  data::Dataset ds;
  ds.name = setup.provenance.name;
  ds.num_classes = 2;
  ds.images = setup.images;
  ds.labels.assign(setup.labels.begin(), setup.labels.end());
  data::save_dataset(ds, dir);
  const auto& p = setup.provenance;
  json j{{"name", p.name},
         {"kind", std::string(to_string(p.kind))},
         {"severity", p.severity},
         {"achieved_rate", p.achieved_rate},
         {"calibrated", p.calibrated},
         {"calibration_iterations", p.calibration_iterations},
         {"calibration_trace", p.calibration_trace},
         {"source", p.source},
         {"seed", p.seed},
         {"classifier_hash", p.classifier_hash},
         {"true_classes", setup.true_classes},
         {"source_index", setup.source_index}};
  std::ofstream out(dir / "provenance.json");
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + (dir / "provenance.json").string());
  out << j.dump(1) << '\n';
}

PerturbationSetup load_setup(const fs::path& dir) {
  const auto ds = data::load_dataset(dir);
  require(ds.num_classes == 2, ErrorCode::format, "setup container must have 2 classes");
  std::ifstream in(dir / "provenance.json");
  require(static_cast<bool>(in), ErrorCode::not_found,
          "setup provenance not found: " + (dir / "provenance.json").string());
  PerturbationSetup s;
  try {
    const json j = json::parse(in);
    auto& p = s.provenance;
    p.name = j.at("name").get<std::string>();
    const auto kind = parse_setup_kind(j.at("kind").get<std::string>());
    require(kind.has_value(), ErrorCode::format, "setup provenance: unknown field 'kind' value");
    p.kind = *kind;
    p.severity = j.at("severity").get<double>();
    p.achieved_rate = j.at("achieved_rate").get<double>();
    p.calibrated = j.at("calibrated").get<bool>();
    p.calibration_iterations = j.at("calibration_iterations").get<std::size_t>();
    p.calibration_trace = j.at("calibration_trace").get<std::vector<std::pair<double, double>>>();
    p.source = j.at("source").get<std::string>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.classifier_hash = j.at("classifier_hash").get<std::string>();
    s.true_classes = j.at("true_classes").get<std::vector<std::int64_t>>();
    s.source_index = j.at("source_index").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "setup provenance is invalid: " + std::string(e.what()));
  }
  require(s.true_classes.size() == ds.size() && s.source_index.size() == ds.size(),
          ErrorCode::format, "setup provenance length does not match the container");
  s.images = ds.images;
  s.labels.assign(ds.labels.begin(), ds.labels.end());
  return s;
}

}  // namespace gendetect::perturb
