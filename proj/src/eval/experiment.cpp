#include "eval/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "common/log.hpp"
#include "common/rng.hpp"
#include "data/synthetic.hpp"
#include "models/models.hpp"

namespace gendetect::eval {

using json = nlohmann::json;
namespace fs = std::filesystem;
using detectors::DetectorKind;
using autodiff::Shape;

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(std::string what)
      : what_(std::move(what)), start_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    log::info(what_ + " took " + std::to_string(s) + " s");
  }

 private:
  std::string what_;
  std::chrono::steady_clock::time_point start_;
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_field(const std::string& s, const fs::path& path) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == s.size() && !s.empty(), ErrorCode::format,
          "invalid number '" + s + "' in " + path.string());
  return v;
}

struct SplitSetup {
  perturb::PerturbationSetup setup;
  Split split;
  Tensor<float> train_images, val_images, test_images;
  std::vector<int> train_labels, val_labels, test_labels;
};

SplitSetup split_setup(perturb::PerturbationSetup setup, std::uint64_t seed) {
  SplitSetup s{std::move(setup), {}, {}, {}, {}, {}, {}, {}};
  s.split = split_indices(s.setup.labels, split_seed(seed, s.setup.provenance.name));
  s.train_images = gather(s.setup.images, s.split.train);
  s.val_images = gather(s.setup.images, s.split.val);
  s.test_images = gather(s.setup.images, s.split.test);
  s.train_labels = gather(s.setup.labels, s.split.train);
  s.val_labels = gather(s.setup.labels, s.split.val);
  s.test_labels = gather(s.setup.labels, s.split.test);
  return s;
}

}  // namespace

const ReportRow* EvalReport::find(const std::string& setup, const std::string& detector) const {
  for (const auto& r : rows)
    if (r.setup == setup && r.detector == detector) return &r;
  return nullptr;
}

Tensor<float> gather(const Tensor<float>& images, std::span<const std::size_t> indices) {
  require(!indices.empty(), ErrorCode::invalid_argument, "cannot gather an empty selection");
  Shape shape = images.shape();
  shape[0] = indices.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < images.dim(0), ErrorCode::invalid_argument, "gather index out of range");
    const auto src = images.sample(indices[i]);
    std::copy(src.begin(), src.end(), out.sample(i).begin());
  }
  return out;
}

std::vector<int> gather(std::span<const int> labels, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (const auto i : indices) out.push_back(labels[i]);
  return out;
}

std::vector<detectors::StreamCandidate> stream_candidates(const std::vector<std::string>& streams,
                                                          std::shared_ptr<const Net> ae) {
  std::vector<detectors::StreamCandidate> out;
  for (const auto& name : streams) {
    const auto kind = transforms::parse_transform_kind(name);
    require(kind.has_value(), ErrorCode::invalid_argument, "unknown stream '" + name + "'");
    detectors::StreamCandidate c{*kind, transforms::default_grid(*kind), nullptr};
    if (*kind == transforms::TransformKind::autoencoder) {
      require(ae != nullptr, ErrorCode::invalid_argument,
              "the autoencoder stream needs a trained autoencoder");
      c.autoencoder = ae;
    }
    out.push_back(std::move(c));
  }
  return out;
}

detectors::Detector train_detector(DetectorKind kind, const Net& net, const DetectorInputs& in,
                                   const Tensor<float>& train_images,
                                   std::span<const int> train_labels,
                                   const Tensor<float>& val_images,
                                   std::span<const int> val_labels) {
  Stopwatch sw("training " + std::string(detectors::to_string(kind)));
  detectors::Detector det;
  det.kind = kind;
  detectors::GitOptions opts;
  opts.features = in.features;
  switch (kind) {
    case DetectorKind::git:
      det.git = detectors::train_git(net, stream_candidates(in.streams, in.autoencoder),
                                     train_images, train_labels, val_images, val_labels, opts);
      break;
    case DetectorKind::gran:
      det.git = detectors::train_gran(net, train_images, train_labels, val_images, val_labels, opts);
      break;
    case DetectorKind::gradnorm:
      det.gradnorm.all_layers = false;
      break;
    case DetectorKind::gradnorm_all:
      det.gradnorm = detectors::train_gradnorm_all(net, train_images, train_labels);
      break;
    case DetectorKind::mahalanobis: {
      require(in.clean_train != nullptr, ErrorCode::invalid_argument,
              "Mahalanobis needs the clean training set");
      detectors::GaussianFitOptions fit;
      fit.tied = in.mahalanobis_tied;
      auto layers = detectors::fit_mahalanobis(net, in.clean_train->images, in.clean_train->labels,
                                               in.clean_train->num_classes, fit);
      det.mahalanobis = detectors::train_mahalanobis(net, std::move(layers), train_images,
                                                     train_labels, val_images, val_labels);
      break;
    }
  }
  return det;
}

data::Dataset experiment_data(const ExperimentConfig& cfg, const std::string& part) {
  data::SyntheticSpec spec;
  spec.family = *data::parse_family(part == "ood" ? cfg.ood_family : cfg.family);
  spec.size = cfg.image_size;
  spec.seed = derive_seed(cfg.seed, "data/" + part);
  if (part == "train") spec.count = cfg.train_count;
  else if (part == "val") spec.count = cfg.val_count;
  else if (part == "pool") spec.count = cfg.pool_count;
  else if (part == "ood") spec.count = cfg.ood_count;
  else fail(ErrorCode::invalid_argument, "unknown data part '" + part + "'");
  return data::generate_synthetic(spec);
}

std::uint64_t split_seed(std::uint64_t seed, const std::string& name) {
  return derive_seed(seed, "split/" + name);
}

void add_row(EvalReport& report, const std::string& setup, const std::string& detector,
             std::span<const double> scores, std::span<const int> labels, bool seen) {
  ReportRow r;
  r.setup = setup;
  r.detector = detector;
  r.auroc = auroc(scores, labels);
  r.tnr95 = tnr_at_tpr(scores, labels, 0.95);
  r.n = scores.size();
  r.seen = seen;
  r.roc = roc_curve(scores, labels);
  report.rows.push_back(std::move(r));
}

EvalReport run_experiment(const ExperimentConfig& cfg, const fs::path* artifacts) {
  validate_config(cfg);
  Stopwatch total("experiment");
  EvalReport report;
  report.seed = cfg.seed;
  if (artifacts) fs::create_directories(*artifacts);

  // data
  const auto train = experiment_data(cfg, "train");
  const auto val = experiment_data(cfg, "val");
  const auto pool = experiment_data(cfg, "pool");
  std::optional<data::Dataset> ood;
  if (cfg.ood_count > 0) ood = experiment_data(cfg, "ood");

  // classifier
  std::shared_ptr<const Net> net;
  if (!cfg.classifier_checkpoint.empty()) {
    net = std::make_shared<Net>(models::load_checkpoint(cfg.classifier_checkpoint).net);
  } else {
    Stopwatch sw("classifier training");
    models::ClassifierConfig cc;
    cc.input_shape = train.image_shape();
    cc.num_classes = train.num_classes;
    cc.preset = cfg.classifier_preset;
    cc.epochs = cfg.classifier_epochs;
    cc.learning_rate = cfg.classifier_lr;
    cc.batch_size = cfg.classifier_batch;
    cc.seed = derive_seed(cfg.seed, "classifier");
    net = std::make_shared<Net>(models::train_classifier(cc, train, val));
  }
  report.classifier_accuracy = models::accuracy(*net, val);
  log::info("classifier validation accuracy " + std::to_string(report.classifier_accuracy));
  if (artifacts)
    models::save_checkpoint(*net,
                            {"classifier", cfg.classifier_preset, train.num_classes, cfg.seed,
                             cfg.classifier_epochs, report.classifier_accuracy},
                            *artifacts / "classifier.ckpt");

  // autoencoder
  std::shared_ptr<const Net> ae;
  const bool want_ae =
      std::find(cfg.streams.begin(), cfg.streams.end(), "autoencoder") != cfg.streams.end();
  if (want_ae && !cfg.autoencoder_checkpoint.empty()) {
    ae = std::make_shared<Net>(models::load_checkpoint(cfg.autoencoder_checkpoint).net);
  } else if (want_ae) {
    Stopwatch sw("autoencoder training");
    models::AutoencoderConfig ac;
    ac.input_shape = train.image_shape();
    ac.epochs = cfg.autoencoder_epochs;
    ac.seed = derive_seed(cfg.seed, "autoencoder");
    std::vector<std::size_t> idx(cfg.autoencoder_train == 0
                                     ? train.size()
                                     : std::min(cfg.autoencoder_train, train.size()));
    std::iota(idx.begin(), idx.end(), 0);
    ae = std::make_shared<Net>(models::train_autoencoder(ac, data::subset(train, idx)));
    if (artifacts)
      models::save_checkpoint(*ae, {"autoencoder", "ae-v1", 0, cfg.seed, cfg.autoencoder_epochs, 0},
                              *artifacts / "autoencoder.ckpt");
  }

  // setups
  std::vector<SplitSetup> setups;
  for (const auto& name : cfg.setups) {
    Stopwatch sw("setup " + name);
    perturb::SetupConfig sc;
    sc.name = name;
    sc.kind = *perturb::parse_setup_kind(name);
    sc.seed = derive_seed(cfg.seed, "setups");
    if (const auto it = cfg.setup_count.find(name); it != cfg.setup_count.end())
      sc.count = it->second;
    auto s = perturb::build_setup(sc, *net, pool, ood ? &*ood : nullptr);
    report.setup_rates[name] = s.provenance.achieved_rate;
    report.setup_severities[name] = s.provenance.severity;
    report.calibration_iterations[name] = s.provenance.calibration_iterations;
    log::info("setup " + name + ": " + std::to_string(s.size()) + " samples, positive fraction " +
              std::to_string(s.positive_fraction()));
    setups.push_back(split_setup(std::move(s), cfg.seed));
  }

  // detectors on the seen setup
  const SplitSetup* seen = nullptr;
  for (const auto& s : setups)
    if (s.setup.provenance.name == cfg.seen) seen = &s;
  DetectorInputs in;
  in.autoencoder = ae;
  in.streams = cfg.streams;
  in.clean_train = &train;
  in.mahalanobis_tied = cfg.mahalanobis_tied;
  in.features.per_parameter_mean = cfg.per_parameter_mean;
  std::vector<std::pair<std::string, detectors::Detector>> trained;
  for (const auto& name : cfg.detectors) {
    const auto kind = *detectors::parse_detector_kind(name);
    trained.emplace_back(name, train_detector(kind, *net, in, seen->train_images, seen->train_labels,
                                              seen->val_images, seen->val_labels));
    if (artifacts) detectors::save_detector(trained.back().second, *net, *artifacts / (name + ".json"));
  }

  std::optional<detectors::GitDetector> git_all;
  if (cfg.ablation_train_all) {
    const detectors::GitDetector* base = nullptr;
    for (const auto& [name, det] : trained)
      if (det.kind == DetectorKind::git) base = &det.git;
    require(base != nullptr, ErrorCode::invalid_argument,
            "config key 'ablation.train_all' needs the git detector");
    Stopwatch sw("training git_all");
    std::vector<float> buf;
    std::vector<int> labels;
    for (const auto& s : setups) {
      std::vector<std::size_t> rows(s.split.train);
      if (cfg.ablation_max_per_setup > 0 && rows.size() > cfg.ablation_max_per_setup) {
        Rng rng = make_rng(cfg.seed, "ablation/" + s.setup.provenance.name);
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(cfg.ablation_max_per_setup);
        std::sort(rows.begin(), rows.end());
      }
      for (const auto i : rows) {
        const auto img = s.setup.images.sample(i);
        buf.insert(buf.end(), img.begin(), img.end());
        labels.push_back(s.setup.labels[i]);
      }
    }
    Shape shape = net->input_shape();
    shape.insert(shape.begin(), labels.size());
    detectors::GitOptions opts;
    opts.features = in.features;
    git_all = detectors::refit_git(*net, base->transforms(), Tensor<float>(shape, std::move(buf)),
                                   labels, opts);
  }

  // scoring
  for (const auto& s : setups) {
    Stopwatch sw("scoring " + s.setup.provenance.name);
    const auto& name = s.setup.provenance.name;
    const bool is_seen = name == cfg.seen;
    for (const auto& [dname, det] : trained) {
      if (det.kind == DetectorKind::git) {
        const auto feats =
            gradfeat::extract_batch(*net, s.test_images, det.git.transforms(), det.git.features);
        const auto probs = det.git.fuse_input(feats);
        add_row(report, name, dname, det.git.fusion.predict_all(probs), s.test_labels, is_seen);
        for (std::size_t k = 0; k < det.git.streams.size(); ++k) {
          std::vector<double> col(probs.rows);
          for (std::size_t i = 0; i < probs.rows; ++i) col[i] = probs.values[i * probs.cols + k];
          add_row(report, name,
                  dname + "/" + std::string(transforms::to_string(det.git.streams[k].transform.kind)),
                  col, s.test_labels, is_seen);
        }
      } else {
        add_row(report, name, dname, det.score_batch(*net, s.test_images), s.test_labels, is_seen);
      }
    }
    if (git_all)
      add_row(report, name, "git_all", git_all->score_batch(*net, s.test_images), s.test_labels,
              true);
  }
  return report;
}

std::string roc_filename(const std::string& setup, const std::string& detector) {
  std::string d = detector;
  std::replace(d.begin(), d.end(), '/', '-');
  return "roc_" + setup + "_" + d + ".txt";
}

void emit_report(const EvalReport& report, const fs::path& dir) {
  fs::create_directories(dir / "roc");
  std::ofstream out(dir / "summary.csv");
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + (dir / "summary.csv").string());
  out << "setup,detector,auroc,tnr95,n,seen\n";
  for (const auto& r : report.rows) {
    out << r.setup << ',' << r.detector << ',' << format_double(r.auroc) << ','
        << format_double(r.tnr95) << ',' << r.n << ',' << (r.seen ? 1 : 0) << '\n';
    std::ofstream roc(dir / "roc" / roc_filename(r.setup, r.detector));
    require(static_cast<bool>(roc), ErrorCode::io, "cannot write ROC points for " + r.setup);
    for (const auto& p : r.roc) roc << format_double(p.fpr) << ' ' << format_double(p.tpr) << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + (dir / "summary.csv").string());
}

std::vector<ReportRow> parse_summary(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::not_found, "summary not found: " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == "setup,detector,auroc,tnr95,n,seen",
          ErrorCode::format, "summary header mismatch in " + path.string());
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    require(f.size() == 6, ErrorCode::format, "summary row has " + std::to_string(f.size()) +
                                                  " fields, expected 6: " + line);
    ReportRow r;
    r.setup = f[0];
    r.detector = f[1];
    r.auroc = parse_field(f[2], path);
    r.tnr95 = parse_field(f[3], path);
    r.n = static_cast<std::size_t>(parse_field(f[4], path));
    require(f[5] == "0" || f[5] == "1", ErrorCode::format, "summary field 'seen' must be 0 or 1");
    r.seen = f[5] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<RocPoint> parse_roc(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::not_found, "ROC file not found: " + path.string());
  std::vector<RocPoint> pts;
  std::string a, b;
  while (in >> a >> b) pts.push_back({parse_field(a, path), parse_field(b, path)});
  return pts;
}

void save_report_json(const EvalReport& report, const fs::path& path) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json roc = json::array();
    for (const auto& p : r.roc) roc.push_back({p.fpr, p.tpr});
    rows.push_back({{"setup", r.setup},
                    {"detector", r.detector},
                    {"auroc", r.auroc},
                    {"tnr95", r.tnr95},
                    {"n", r.n},
                    {"seen", r.seen},
                    {"roc", std::move(roc)}});
  }
  json j{{"format", "gendetect-report-1"},
         {"seed", report.seed},
         {"classifier_accuracy", report.classifier_accuracy},
         {"setup_rates", report.setup_rates},
         {"setup_severities", report.setup_severities},
         {"calibration_iterations", report.calibration_iterations},
         {"rows", std::move(rows)}};
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

EvalReport load_report_json(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::not_found, "report not found: " + path.string());
  EvalReport r;
  try {
    const json j = json::parse(in);
    require(j.at("format").get<std::string>() == "gendetect-report-1", ErrorCode::format,
            "report format version mismatch");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.classifier_accuracy = j.at("classifier_accuracy").get<double>();
    r.setup_rates = j.at("setup_rates").get<std::map<std::string, double>>();
    r.setup_severities = j.at("setup_severities").get<std::map<std::string, double>>();
    r.calibration_iterations =
        j.at("calibration_iterations").get<std::map<std::string, std::size_t>>();
    for (const auto& e : j.at("rows")) {
      ReportRow row;
      row.setup = e.at("setup").get<std::string>();
      row.detector = e.at("detector").get<std::string>();
      row.auroc = e.at("auroc").get<double>();
      row.tnr95 = e.at("tnr95").get<double>();
      row.n = e.at("n").get<std::size_t>();
      row.seen = e.at("seen").get<bool>();
      for (const auto& p : e.at("roc")) row.roc.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      r.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "report is invalid: " + std::string(e.what()));
  }
  return r;
}

}  // namespace gendetect::eval
