#include "gendetect/gendetect.h"

#include <cmath>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "data/synthetic.hpp"
#include "eval/experiment.hpp"
#include "models/models.hpp"

using namespace gendetect;

struct gd_dataset {
  data::Dataset ds;
};

struct gd_network {
  std::shared_ptr<models::Net> net;
  models::CheckpointMeta meta;
};

struct gd_setup {
  perturb::PerturbationSetup setup;
};

struct gd_detector {
  detectors::Detector det;
};

struct gd_config {
  eval::ExperimentConfig cfg;
};

struct gd_report {
  eval::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

gd_status status_of(ErrorCode code) { return static_cast<gd_status>(static_cast<int>(code)); }

template <class F>
gd_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return GD_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GD_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::invalid_argument, std::string(what) + " is NULL");
}

std::string str(const char* s, const char* what) {
  need(s, what);
  return s;
}

}  // namespace

extern "C" {

const char* gd_last_error(void) { return g_last_error.c_str(); }

const char* gd_status_string(gd_status status) {
  switch (status) {
    case GD_OK: return "ok";
    case GD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case GD_ERR_SHAPE: return "shape mismatch";
    case GD_ERR_FORMAT: return "format error";
    case GD_ERR_IO: return "i/o error";
    case GD_ERR_NOT_FOUND: return "not found";
    case GD_ERR_NUMERIC: return "numeric error";
    case GD_ERR_STATE: return "invalid state";
    case GD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* gd_version(void) { return "1.0.0"; }

// ---- datasets ----

gd_status gd_dataset_generate(const char* family, size_t count, size_t size, uint64_t seed,
                              gd_dataset** out) {
  return guarded([&] {
    need(out, "out");
    const auto f = data::parse_family(str(family, "family"));
    require(f.has_value(), ErrorCode::invalid_argument,
            "unknown dataset family '" + std::string(family) + "'");
    data::SyntheticSpec spec;
    spec.family = *f;
    spec.count = count;
    spec.size = size;
    spec.seed = seed;
    *out = new gd_dataset{data::generate_synthetic(spec)};
  });
}

gd_status gd_dataset_load(const char* dir, gd_dataset** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gd_dataset{data::load_dataset(str(dir, "dir"))};
  });
}

gd_status gd_dataset_save(const gd_dataset* ds, const char* dir) {
  return guarded([&] {
    need(ds, "dataset");
    data::save_dataset(ds->ds, str(dir, "dir"));
  });
}

size_t gd_dataset_size(const gd_dataset* ds) { return ds ? ds->ds.size() : 0; }

size_t gd_dataset_num_classes(const gd_dataset* ds) { return ds ? ds->ds.num_classes : 0; }

gd_status gd_dataset_image(const gd_dataset* ds, size_t i, float* out, size_t capacity) {
  return guarded([&] {
    need(ds, "dataset");
    need(out, "out");
    require(i < ds->ds.size(), ErrorCode::invalid_argument, "image index out of range");
    const auto img = ds->ds.image(i);
    require(capacity >= img.size(), ErrorCode::invalid_argument,
            "buffer holds " + std::to_string(capacity) + " floats, image needs " +
                std::to_string(img.size()));
    std::copy(img.begin(), img.end(), out);
  });
}

gd_status gd_dataset_label(const gd_dataset* ds, size_t i, uint32_t* out) {
  return guarded([&] {
    need(ds, "dataset");
    need(out, "out");
    require(i < ds->ds.size(), ErrorCode::invalid_argument, "label index out of range");
    *out = ds->ds.labels[i];
  });
}

void gd_dataset_free(gd_dataset* ds) { delete ds; }

// ---- networks ----

gd_classifier_options gd_classifier_options_default(void) {
  const models::ClassifierConfig c;
  return {"smallcnn-v1", c.epochs, c.learning_rate, c.batch_size, 0};
}

gd_autoencoder_options gd_autoencoder_options_default(void) {
  const models::AutoencoderConfig c;
  return {c.epochs, c.learning_rate, c.batch_size, 0, 0};
}

gd_status gd_classifier_train(const gd_dataset* train, const gd_dataset* val,
                              const gd_classifier_options* opts, gd_network** out) {
  return guarded([&] {
    need(train, "train");
    need(val, "val");
    need(opts, "options");
    need(out, "out");
    models::ClassifierConfig cc;
    cc.input_shape = train->ds.image_shape();
    cc.num_classes = train->ds.num_classes;
    cc.preset = str(opts->preset, "preset");
    cc.epochs = opts->epochs;
    cc.learning_rate = opts->learning_rate;
    cc.batch_size = opts->batch_size;
    cc.seed = opts->seed;
    auto net = std::make_shared<models::Net>(models::train_classifier(cc, train->ds, val->ds));
    const double acc = models::accuracy(*net, val->ds);
    *out = new gd_network{std::move(net),
                          {"classifier", cc.preset, cc.num_classes, cc.seed, cc.epochs, acc}};
  });
}

gd_status gd_autoencoder_train(const gd_dataset* train, const gd_autoencoder_options* opts,
                               gd_network** out) {
  return guarded([&] {
    need(train, "train");
    need(opts, "options");
    need(out, "out");
    models::AutoencoderConfig ac;
    ac.input_shape = train->ds.image_shape();
    ac.epochs = opts->epochs;
    ac.learning_rate = opts->learning_rate;
    ac.batch_size = opts->batch_size;
    ac.seed = opts->seed;
    std::shared_ptr<models::Net> net;
    if (opts->max_train > 0 && opts->max_train < train->ds.size()) {
      std::vector<std::size_t> idx(opts->max_train);
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      net = std::make_shared<models::Net>(
          models::train_autoencoder(ac, data::subset(train->ds, idx)));
    } else {
      net = std::make_shared<models::Net>(models::train_autoencoder(ac, train->ds));
    }
    *out = new gd_network{std::move(net), {"autoencoder", "ae-v1", 0, ac.seed, ac.epochs, 0}};
  });
}

gd_status gd_network_load(const char* path, gd_network** out) {
  return guarded([&] {
    need(out, "out");
    auto ck = models::load_checkpoint(str(path, "path"));
    *out = new gd_network{std::make_shared<models::Net>(std::move(ck.net)), std::move(ck.meta)};
  });
}

gd_status gd_network_save(const gd_network* net, const char* path) {
  return guarded([&] {
    need(net, "network");
    models::save_checkpoint(*net->net, net->meta, str(path, "path"));
  });
}

gd_status gd_network_hash(const gd_network* net, char* out, size_t capacity) {
  return guarded([&] {
    need(net, "network");
    need(out, "out");
    const auto h = models::network_hash(*net->net);
    require(capacity > h.size(), ErrorCode::invalid_argument, "hash buffer too small");
    std::memcpy(out, h.c_str(), h.size() + 1);
  });
}

const char* gd_network_role(const gd_network* net) { return net ? net->meta.role.c_str() : ""; }

gd_status gd_network_accuracy(const gd_network* net, const gd_dataset* ds, double* out) {
  return guarded([&] {
    need(net, "network");
    need(ds, "dataset");
    need(out, "out");
    *out = models::accuracy(*net->net, ds->ds);
  });
}

gd_status gd_network_predict(const gd_network* net, const gd_dataset* ds, uint32_t* out) {
  return guarded([&] {
    need(net, "network");
    need(ds, "dataset");
    need(out, "out");
    const auto labels = models::predict_labels(*net->net, ds->ds.images);
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = static_cast<uint32_t>(labels[i]);
  });
}

void gd_network_free(gd_network* net) { delete net; }

// ---- setups ----

gd_setup_options gd_setup_options_default(void) {
  const perturb::SetupConfig c;
  return {"original", nullptr, 0, 0, 0, 0.0, c.target, c.tolerance};
}

gd_status gd_setup_build(const gd_setup_options* opts, const gd_network* classifier,
                         const gd_dataset* pool, const gd_dataset* ood, gd_setup** out) {
  return guarded([&] {
    need(opts, "options");
    need(classifier, "classifier");
    need(pool, "pool");
    need(out, "out");
    perturb::SetupConfig sc;
    const auto kind = perturb::parse_setup_kind(str(opts->kind, "kind"));
    require(kind.has_value(), ErrorCode::invalid_argument,
            "unknown setup kind '" + std::string(opts->kind) + "'");
    sc.kind = *kind;
    sc.name = opts->name ? opts->name : opts->kind;
    sc.seed = opts->seed;
    sc.count = opts->count;
    if (opts->has_severity) sc.severity = opts->severity;
    sc.target = opts->target;
    sc.tolerance = opts->tolerance;
    *out = new gd_setup{
        perturb::build_setup(sc, *classifier->net, pool->ds, ood ? &ood->ds : nullptr)};
  });
}

gd_status gd_setup_load(const char* dir, gd_setup** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gd_setup{perturb::load_setup(str(dir, "dir"))};
  });
}

gd_status gd_setup_save(const gd_setup* setup, const char* dir) {
  return guarded([&] {
    need(setup, "setup");
    perturb::save_setup(setup->setup, str(dir, "dir"));
  });
}

size_t gd_setup_size(const gd_setup* setup) { return setup ? setup->setup.size() : 0; }

double gd_setup_positive_fraction(const gd_setup* setup) {
  return setup ? setup->setup.positive_fraction() : NAN;
}

double gd_setup_severity(const gd_setup* setup) {
  return setup ? setup->setup.provenance.severity : NAN;
}

double gd_setup_achieved_rate(const gd_setup* setup) {
  return setup ? setup->setup.provenance.achieved_rate : NAN;
}

void gd_setup_free(gd_setup* setup) { delete setup; }

// ---- detectors ----

gd_detector_options gd_detector_options_default(void) {
  return {"git", "identity,gaussian,wiener,median,autoencoder", 0, 0, 1};
}

gd_status gd_detector_train(const gd_detector_options* opts, const gd_network* classifier,
                            const gd_network* autoencoder, const gd_setup* setup,
                            const gd_dataset* clean_train, gd_detector** out) {
  return guarded([&] {
    need(opts, "options");
    need(classifier, "classifier");
    need(setup, "setup");
    need(out, "out");
    const auto kind = detectors::parse_detector_kind(str(opts->kind, "kind"));
    require(kind.has_value(), ErrorCode::invalid_argument,
            "unknown detector kind '" + std::string(opts->kind) + "'");
    eval::DetectorInputs in;
    if (autoencoder) in.autoencoder = autoencoder->net;
    in.streams.clear();
    std::stringstream ss(str(opts->streams, "streams"));
    for (std::string s; std::getline(ss, s, ',');)
      if (!s.empty()) in.streams.push_back(s);
    in.clean_train = clean_train ? &clean_train->ds : nullptr;
    in.mahalanobis_tied = opts->mahalanobis_tied != 0;
    in.features.per_parameter_mean = opts->per_parameter_mean != 0;

    const auto& s = setup->setup;
    const auto split = eval::split_indices(s.labels, eval::split_seed(opts->seed, s.provenance.name));
    *out = new gd_detector{eval::train_detector(
        *kind, *classifier->net, in, eval::gather(s.images, split.train),
        eval::gather(s.labels, split.train), eval::gather(s.images, split.val),
        eval::gather(s.labels, split.val))};
  });
}

gd_status gd_detector_save(const gd_detector* det, const gd_network* classifier,
                           const char* path) {
  return guarded([&] {
    need(det, "detector");
    need(classifier, "classifier");
    detectors::save_detector(det->det, *classifier->net, str(path, "path"));
  });
}

gd_status gd_detector_load(const char* path, const gd_network* classifier,
                           const gd_network* autoencoder, gd_detector** out) {
  return guarded([&] {
    need(classifier, "classifier");
    need(out, "out");
    *out = new gd_detector{detectors::load_detector(str(path, "path"), *classifier->net,
                                                    autoencoder ? autoencoder->net : nullptr)};
  });
}

const char* gd_detector_kind(const gd_detector* det) {
  return det ? detectors::to_string(det->det.kind).data() : "";
}

gd_status gd_detector_score_setup(const gd_detector* det, const gd_network* classifier,
                                  const gd_setup* setup, double* out) {
  return guarded([&] {
    need(det, "detector");
    need(classifier, "classifier");
    need(setup, "setup");
    need(out, "out");
    const auto scores = det->det.score_batch(*classifier->net, setup->setup.images);
    std::copy(scores.begin(), scores.end(), out);
  });
}

void gd_detector_free(gd_detector* det) { delete det; }

// ---- experiments ----

gd_status gd_config_default(gd_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gd_config{};
  });
}

gd_status gd_config_load(const char* path, gd_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gd_config{eval::load_config(str(path, "path"))};
  });
}

gd_status gd_config_parse(const char* text, gd_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gd_config{eval::parse_config_text(str(text, "text"))};
  });
}

gd_status gd_config_set(gd_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    eval::set_config_value(cfg->cfg, str(key, "key"), str(value, "value"));
  });
}

gd_status gd_config_validate(const gd_config* cfg) {
  return guarded([&] {
    need(cfg, "config");
    eval::validate_config(cfg->cfg);
  });
}

void gd_config_free(gd_config* cfg) { delete cfg; }

gd_status gd_experiment_run(const gd_config* cfg, const char* artifacts_dir, gd_report** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    if (artifacts_dir) {
      const std::filesystem::path dir(artifacts_dir);
      *out = new gd_report{eval::run_experiment(cfg->cfg, &dir)};
    } else {
      *out = new gd_report{eval::run_experiment(cfg->cfg)};
    }
  });
}

size_t gd_report_row_count(const gd_report* report) {
  return report ? report->report.rows.size() : 0;
}

gd_status gd_report_row_at(const gd_report* report, size_t i, gd_report_row* out) {
  return guarded([&] {
    need(report, "report");
    need(out, "out");
    require(i < report->report.rows.size(), ErrorCode::invalid_argument, "row index out of range");
    const auto& r = report->report.rows[i];
    *out = {r.setup.c_str(), r.detector.c_str(), r.auroc, r.tnr95, r.n, r.seen ? 1 : 0,
            r.roc.size()};
  });
}

gd_status gd_report_roc_point(const gd_report* report, size_t i, size_t j, double* fpr,
                              double* tpr) {
  return guarded([&] {
    need(report, "report");
    need(fpr, "fpr");
    need(tpr, "tpr");
    require(i < report->report.rows.size(), ErrorCode::invalid_argument, "row index out of range");
    const auto& roc = report->report.rows[i].roc;
    require(j < roc.size(), ErrorCode::invalid_argument, "ROC point index out of range");
    *fpr = roc[j].fpr;
    *tpr = roc[j].tpr;
  });
}

double gd_report_classifier_accuracy(const gd_report* report) {
  return report ? report->report.classifier_accuracy : NAN;
}

uint64_t gd_report_seed(const gd_report* report) { return report ? report->report.seed : 0; }

gd_status gd_report_emit(const gd_report* report, const char* dir) {
  return guarded([&] {
    need(report, "report");
    eval::emit_report(report->report, str(dir, "dir"));
  });
}

gd_status gd_report_save(const gd_report* report, const char* path) {
  return guarded([&] {
    need(report, "report");
    eval::save_report_json(report->report, str(path, "path"));
  });
}

gd_status gd_report_load(const char* path, gd_report** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gd_report{eval::load_report_json(str(path, "path"))};
  });
}

void gd_report_free(gd_report* report) { delete report; }

}  // extern "C"
