#ifndef GENDETECT_GENDETECT_H
#define GENDETECT_GENDETECT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define GD_API __attribute__((visibility("default")))
#else
#define GD_API
#endif

typedef enum gd_status {
  GD_OK = 0,
  GD_ERR_INVALID_ARGUMENT = 1,
  GD_ERR_SHAPE = 2,
  GD_ERR_FORMAT = 3,
  GD_ERR_IO = 4,
  GD_ERR_NOT_FOUND = 5,
  GD_ERR_NUMERIC = 6,
  GD_ERR_STATE = 7,
  GD_ERR_INTERNAL = 8
} gd_status;

/* Message of the last failed call on this thread; "" if none. */
GD_API const char* gd_last_error(void);
GD_API const char* gd_status_string(gd_status status);
GD_API const char* gd_version(void);

typedef struct gd_dataset gd_dataset;
typedef struct gd_network gd_network;
typedef struct gd_setup gd_setup;
typedef struct gd_detector gd_detector;
typedef struct gd_config gd_config;
typedef struct gd_report gd_report;

/* ---- datasets ---- */

/* family: "shapes-v1" or "textures-v1"; images are size x size x 3. */
GD_API gd_status gd_dataset_generate(const char* family, size_t count, size_t size, uint64_t seed,
                                     gd_dataset** out);
GD_API gd_status gd_dataset_load(const char* dir, gd_dataset** out);
GD_API gd_status gd_dataset_save(const gd_dataset* ds, const char* dir);
GD_API size_t gd_dataset_size(const gd_dataset* ds);
GD_API size_t gd_dataset_num_classes(const gd_dataset* ds);
/* Copies image i (C*H*W floats) into `out`, which must hold `capacity` floats. */
GD_API gd_status gd_dataset_image(const gd_dataset* ds, size_t i, float* out, size_t capacity);
GD_API gd_status gd_dataset_label(const gd_dataset* ds, size_t i, uint32_t* out);
GD_API void gd_dataset_free(gd_dataset* ds);

/* ---- networks ---- */

typedef struct gd_classifier_options {
  const char* preset; /* "smallcnn-v1" */
  size_t epochs;
  double learning_rate;
  size_t batch_size;
  uint64_t seed;
} gd_classifier_options;

typedef struct gd_autoencoder_options {
  size_t epochs;
  double learning_rate;
  size_t batch_size;
  size_t max_train; /* leading training images used; 0 = all */
  uint64_t seed;
} gd_autoencoder_options;

GD_API gd_classifier_options gd_classifier_options_default(void);
GD_API gd_autoencoder_options gd_autoencoder_options_default(void);

GD_API gd_status gd_classifier_train(const gd_dataset* train, const gd_dataset* val,
                                     const gd_classifier_options* opts, gd_network** out);
GD_API gd_status gd_autoencoder_train(const gd_dataset* train, const gd_autoencoder_options* opts,
                                      gd_network** out);
GD_API gd_status gd_network_load(const char* path, gd_network** out);
GD_API gd_status gd_network_save(const gd_network* net, const char* path);
/* 16 hex digits plus NUL; `out` must hold at least 17 bytes. */
GD_API gd_status gd_network_hash(const gd_network* net, char* out, size_t capacity);
/* "classifier" or "autoencoder". */
GD_API const char* gd_network_role(const gd_network* net);
GD_API gd_status gd_network_accuracy(const gd_network* net, const gd_dataset* ds, double* out);
/* Predicted class per image; `out` must hold gd_dataset_size(ds) entries. */
GD_API gd_status gd_network_predict(const gd_network* net, const gd_dataset* ds, uint32_t* out);
GD_API void gd_network_free(gd_network* net);

/* ---- perturbation setups ---- */

typedef struct gd_setup_options {
  const char* kind; /* original, gaussian, shot, impulse, fgsm, bim, deepfool, cwl2, ood */
  const char* name; /* NULL = kind */
  uint64_t seed;
  size_t count;        /* leading pool images used; 0 = all */
  int has_severity;    /* nonzero skips calibration */
  double severity;
  double target;       /* misclassification rate to calibrate to */
  double tolerance;
} gd_setup_options;

GD_API gd_setup_options gd_setup_options_default(void);
/* `ood` is required for the ood kind and ignored otherwise. */
GD_API gd_status gd_setup_build(const gd_setup_options* opts, const gd_network* classifier,
                                const gd_dataset* pool, const gd_dataset* ood, gd_setup** out);
GD_API gd_status gd_setup_load(const char* dir, gd_setup** out);
GD_API gd_status gd_setup_save(const gd_setup* setup, const char* dir);
GD_API size_t gd_setup_size(const gd_setup* setup);
GD_API double gd_setup_positive_fraction(const gd_setup* setup);
GD_API double gd_setup_severity(const gd_setup* setup);
GD_API double gd_setup_achieved_rate(const gd_setup* setup);
GD_API void gd_setup_free(gd_setup* setup);

/* ---- detectors ---- */

typedef struct gd_detector_options {
  const char* kind;    /* git, gran, gradnorm, gradnorm_all, mahalanobis */
  const char* streams; /* comma separated stream kinds for git */
  uint64_t seed; /* the train/val/test split derives from (seed, setup name) */
  int per_parameter_mean;
  int mahalanobis_tied;
} gd_detector_options;

GD_API gd_detector_options gd_detector_options_default(void);
/* Trains on the train split of `setup` and tunes on its val split.
   `autoencoder` is needed for an autoencoder stream; `clean_train` for
   mahalanobis. Either may be NULL otherwise. */
GD_API gd_status gd_detector_train(const gd_detector_options* opts, const gd_network* classifier,
                                   const gd_network* autoencoder, const gd_setup* setup,
                                   const gd_dataset* clean_train, gd_detector** out);
GD_API gd_status gd_detector_save(const gd_detector* det, const gd_network* classifier,
                                  const char* path);
GD_API gd_status gd_detector_load(const char* path, const gd_network* classifier,
                                  const gd_network* autoencoder, gd_detector** out);
GD_API const char* gd_detector_kind(const gd_detector* det);
/* Scores every setup image; `out` must hold gd_setup_size(setup) entries. */
GD_API gd_status gd_detector_score_setup(const gd_detector* det, const gd_network* classifier,
                                         const gd_setup* setup, double* out);
GD_API void gd_detector_free(gd_detector* det);

/* ---- experiments and reports ---- */

GD_API gd_status gd_config_default(gd_config** out);
GD_API gd_status gd_config_load(const char* path, gd_config** out);
GD_API gd_status gd_config_parse(const char* text, gd_config** out);
GD_API gd_status gd_config_set(gd_config* cfg, const char* key, const char* value);
GD_API gd_status gd_config_validate(const gd_config* cfg);
GD_API void gd_config_free(gd_config* cfg);

/* Runs the whole protocol. When `artifacts_dir` is not NULL the trained
   networks and detectors are written there. */
GD_API gd_status gd_experiment_run(const gd_config* cfg, const char* artifacts_dir,
                                   gd_report** out);

typedef struct gd_report_row {
  const char* setup; /* valid while the report lives */
  const char* detector;
  double auroc;
  double tnr95;
  size_t n;
  int seen;
  size_t roc_points;
} gd_report_row;

GD_API size_t gd_report_row_count(const gd_report* report);
GD_API gd_status gd_report_row_at(const gd_report* report, size_t i, gd_report_row* out);
/* ROC vertex j of row i. */
GD_API gd_status gd_report_roc_point(const gd_report* report, size_t i, size_t j, double* fpr,
                                     double* tpr);
GD_API double gd_report_classifier_accuracy(const gd_report* report);
GD_API uint64_t gd_report_seed(const gd_report* report);
/* summary.csv plus roc/roc_<setup>_<detector>.txt under `dir`. */
GD_API gd_status gd_report_emit(const gd_report* report, const char* dir);
GD_API gd_status gd_report_save(const gd_report* report, const char* path);
GD_API gd_status gd_report_load(const char* path, gd_report** out);
GD_API void gd_report_free(gd_report* report);

#ifdef __cplusplus
}
#endif

#endif
