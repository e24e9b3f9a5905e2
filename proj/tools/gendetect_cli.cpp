#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gendetect/gendetect.h"

namespace fs = std::filesystem;

namespace {

// Carries a failed C API status out to main.
struct Failure {
  gd_status status;
  std::string message;
};

void check(gd_status s) {
  if (s != GD_OK) throw Failure{s, gd_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw Failure{GD_ERR_INVALID_ARGUMENT, msg}; }

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Dataset = Handle<gd_dataset, gd_dataset_free>;
using Network = Handle<gd_network, gd_network_free>;
using Setup = Handle<gd_setup, gd_setup_free>;
using Detector = Handle<gd_detector, gd_detector_free>;
using Config = Handle<gd_config, gd_config_free>;
using Report = Handle<gd_report, gd_report_free>;

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

void need_out(const std::string& out, const char* what) {
  if (out.empty()) usage_error(std::string("--out is required: ") + what);
}

void make_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

struct GenData {
  std::string family = "shapes-v1";
  std::size_t count = 0;
  std::size_t size = 32;
};

void gen_data(const Globals& g, const GenData& a) {
  need_out(g.out, "dataset directory");
  Dataset ds;
  check(gd_dataset_generate(a.family.c_str(), a.count, a.size, g.seed_or(0), ds.out()));
  check(gd_dataset_save(ds.get(), g.out.c_str()));
  std::printf("wrote %zu images (%zu classes) to %s\n", gd_dataset_size(ds.get()),
              gd_dataset_num_classes(ds.get()), g.out.c_str());
}

struct TrainClassifier {
  std::string train, val;
  gd_classifier_options opts = gd_classifier_options_default();
  std::string preset = "smallcnn-v1";
};

void train_classifier(const Globals& g, TrainClassifier& a) {
  need_out(g.out, "checkpoint path");
  Dataset train, val;
  check(gd_dataset_load(a.train.c_str(), train.out()));
  check(gd_dataset_load(a.val.c_str(), val.out()));
  a.opts.preset = a.preset.c_str();
  a.opts.seed = g.seed_or(0);
  Network net;
  check(gd_classifier_train(train.get(), val.get(), &a.opts, net.out()));
  make_parent(g.out);
  check(gd_network_save(net.get(), g.out.c_str()));
  double acc = 0;
  check(gd_network_accuracy(net.get(), val.get(), &acc));
  std::printf("validation accuracy %.4f\n", acc);
}

struct TrainAutoencoder {
  std::string train;
  gd_autoencoder_options opts = gd_autoencoder_options_default();
};

void train_autoencoder(const Globals& g, TrainAutoencoder& a) {
  need_out(g.out, "checkpoint path");
  Dataset train;
  check(gd_dataset_load(a.train.c_str(), train.out()));
  a.opts.seed = g.seed_or(0);
  Network net;
  check(gd_autoencoder_train(train.get(), &a.opts, net.out()));
  make_parent(g.out);
  check(gd_network_save(net.get(), g.out.c_str()));
}

struct BuildSetup {
  std::string kind, name, classifier, pool, ood;
  std::size_t count = 0;
  std::optional<double> severity;
  double target = 0.5;
  double tolerance = 0.03;
};

void build_setup(const Globals& g, const BuildSetup& a) {
  need_out(g.out, "setup directory");
  Network net;
  check(gd_network_load(a.classifier.c_str(), net.out()));
  Dataset pool, ood;
  check(gd_dataset_load(a.pool.c_str(), pool.out()));
  if (!a.ood.empty()) check(gd_dataset_load(a.ood.c_str(), ood.out()));
  gd_setup_options o = gd_setup_options_default();
  o.kind = a.kind.c_str();
  o.name = a.name.empty() ? nullptr : a.name.c_str();
  o.seed = g.seed_or(0);
  o.count = a.count;
  o.has_severity = a.severity.has_value();
  o.severity = a.severity.value_or(0.0);
  o.target = a.target;
  o.tolerance = a.tolerance;
  Setup setup;
  check(gd_setup_build(&o, net.get(), pool.get(), ood.get(), setup.out()));
  check(gd_setup_save(setup.get(), g.out.c_str()));
  std::printf("%zu samples, positive fraction %.4f, severity %.6g\n", gd_setup_size(setup.get()),
              gd_setup_positive_fraction(setup.get()), gd_setup_severity(setup.get()));
}

struct TrainDetector {
  std::string kind = "git";
  std::string classifier, autoencoder, setup, clean_train;
  std::string streams = "identity,gaussian,wiener,median,autoencoder";
  bool per_parameter_mean = false;
  bool untied = false;
};

void train_detector(const Globals& g, const TrainDetector& a) {
  need_out(g.out, "detector path");
  Network net, ae;
  check(gd_network_load(a.classifier.c_str(), net.out()));
  if (!a.autoencoder.empty()) check(gd_network_load(a.autoencoder.c_str(), ae.out()));
  Setup setup;
  check(gd_setup_load(a.setup.c_str(), setup.out()));
  Dataset clean;
  if (!a.clean_train.empty()) check(gd_dataset_load(a.clean_train.c_str(), clean.out()));
  gd_detector_options o = gd_detector_options_default();
  o.kind = a.kind.c_str();
  o.streams = a.streams.c_str();
  o.seed = g.seed_or(0);
  o.per_parameter_mean = a.per_parameter_mean;
  o.mahalanobis_tied = !a.untied;
  Detector det;
  check(gd_detector_train(&o, net.get(), ae.get(), setup.get(), clean.get(), det.out()));
  make_parent(g.out);
  check(gd_detector_save(det.get(), net.get(), g.out.c_str()));
}

void print_summary(const gd_report* r) {
  gd_report_row row;
  for (std::size_t i = 0; i < gd_report_row_count(r); ++i) {
    check(gd_report_row_at(r, i, &row));
    std::printf("%-10s %-20s auroc %.4f tnr95 %.4f n %zu%s\n", row.setup, row.detector, row.auroc,
                row.tnr95, row.n, row.seen ? " (seen)" : "");
  }
}

void evaluate(const Globals& g, bool no_artifacts) {
  if (g.config.empty()) usage_error("--config is required for evaluate");
  need_out(g.out, "output directory");
  Config cfg;
  check(gd_config_load(g.config.c_str(), cfg.out()));
  if (g.seed) check(gd_config_set(cfg.get(), "seed", std::to_string(*g.seed).c_str()));
  fs::create_directories(g.out);
  const std::string artifacts = (fs::path(g.out) / "artifacts").string();
  Report report;
  check(gd_experiment_run(cfg.get(), no_artifacts ? nullptr : artifacts.c_str(), report.out()));
  check(gd_report_save(report.get(), (fs::path(g.out) / "report.json").string().c_str()));
  check(gd_report_emit(report.get(), g.out.c_str()));
  print_summary(report.get());
}

void report_cmd(const Globals& g, const std::string& in) {
  if (in.empty()) usage_error("--in is required for report");
  fs::path src(in);
  if (fs::is_directory(src)) src /= "report.json";
  Report report;
  check(gd_report_load(src.string().c_str(), report.out()));
  const std::string out = g.out.empty() ? src.parent_path().string() : g.out;
  check(gd_report_emit(report.get(), out.empty() ? "." : out.c_str()));
  print_summary(report.get());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based detection of misclassified and out-of-distribution inputs"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--config", g.config, "Experiment configuration file");
  app.add_option("--out", g.out, "Output path");

  GenData gd;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic dataset container");
  c_gen->add_option("--family", gd.family, "shapes-v1 or textures-v1")->capture_default_str();
  c_gen->add_option("--count", gd.count, "Number of images")->required();
  c_gen->add_option("--size", gd.size, "Image side length")->capture_default_str();

  TrainClassifier tc;
  auto* c_tc = app.add_subcommand("train-classifier", "Train the classifier");
  c_tc->add_option("--train", tc.train, "Training dataset")->required();
  c_tc->add_option("--val", tc.val, "Validation dataset")->required();
  c_tc->add_option("--preset", tc.preset)->capture_default_str();
  c_tc->add_option("--epochs", tc.opts.epochs)->capture_default_str();
  c_tc->add_option("--lr", tc.opts.learning_rate)->capture_default_str();
  c_tc->add_option("--batch", tc.opts.batch_size)->capture_default_str();

  TrainAutoencoder ta;
  auto* c_ta = app.add_subcommand("train-autoencoder", "Train the autoencoder stream");
  c_ta->add_option("--train", ta.train, "Training dataset")->required();
  c_ta->add_option("--epochs", ta.opts.epochs)->capture_default_str();
  c_ta->add_option("--lr", ta.opts.learning_rate)->capture_default_str();
  c_ta->add_option("--batch", ta.opts.batch_size)->capture_default_str();
  c_ta->add_option("--max-train", ta.opts.max_train, "Leading images used; 0 = all");

  BuildSetup bs;
  auto* c_bs = app.add_subcommand("build-setup", "Build a perturbation setup");
  c_bs->add_option("--kind", bs.kind, "Setup kind")->required();
  c_bs->add_option("--name", bs.name, "Setup name (default: kind)");
  c_bs->add_option("--classifier", bs.classifier, "Classifier checkpoint")->required();
  c_bs->add_option("--pool", bs.pool, "In-distribution pool dataset")->required();
  c_bs->add_option("--ood", bs.ood, "Out-of-distribution dataset");
  c_bs->add_option("--count", bs.count, "Leading pool images used; 0 = all");
  c_bs->add_option("--severity", bs.severity, "Fixed severity; skips calibration");
  c_bs->add_option("--target", bs.target, "Target misclassification rate")->capture_default_str();
  c_bs->add_option("--tolerance", bs.tolerance)->capture_default_str();

  TrainDetector td;
  auto* c_td = app.add_subcommand("train-detector", "Train a detector on a setup");
  c_td->add_option("--kind", td.kind, "git, gran, gradnorm, gradnorm_all, mahalanobis")
      ->capture_default_str();
  c_td->add_option("--classifier", td.classifier, "Classifier checkpoint")->required();
  c_td->add_option("--setup", td.setup, "Setup directory")->required();
  c_td->add_option("--autoencoder", td.autoencoder, "Autoencoder checkpoint");
  c_td->add_option("--clean-train", td.clean_train, "Clean training dataset (mahalanobis)");
  c_td->add_option("--streams", td.streams, "Comma separated stream kinds")->capture_default_str();
  c_td->add_flag("--per-parameter-mean", td.per_parameter_mean);
  c_td->add_flag("--untied", td.untied, "Per-class Mahalanobis covariances");

  bool no_artifacts = false;
  auto* c_ev = app.add_subcommand("evaluate", "Run the full protocol from a config");
  c_ev->add_flag("--no-artifacts", no_artifacts, "Do not write trained networks and detectors");

  std::string report_in;
  auto* c_rep = app.add_subcommand("report", "Re-emit summary and ROC files from report.json");
  c_rep->add_option("--in", report_in, "report.json or the directory holding it")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return 2;
  }

  try {
    if (*c_gen) gen_data(g, gd);
    else if (*c_tc) train_classifier(g, tc);
    else if (*c_ta) train_autoencoder(g, ta);
    else if (*c_bs) build_setup(g, bs);
    else if (*c_td) train_detector(g, td);
    else if (*c_ev) evaluate(g, no_artifacts);
    else if (*c_rep) report_cmd(g, report_in);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", one_line(f.message).c_str());
    return static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return static_cast<int>(GD_ERR_INTERNAL);
  }
  return 0;
}
