/* digitnet C API: opaque handles over the digitnet core.
 *
 * Every function returns dn_status; on failure dn_last_error() carries a
 * one-line message for the calling thread. Handles are created by *_open /
 * *_create / *_train calls and released by the matching *_close.
 */
#ifndef DIGITNET_H
#define DIGITNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dn_status {
  DN_OK = 0,
  DN_USER_ERROR = 2,     /* bad arguments, missing files, invalid config */
  DN_FORMAT_ERROR = 3,   /* corrupt or mismatched data/checkpoint bytes */
  DN_INTERNAL_ERROR = 4, /* broken invariant inside the library */
} dn_status;

const char* dn_version(void);
/* Message from the most recent failing call on this thread. */
const char* dn_last_error(void);

/* ---- datasets --------------------------------------------------------- */

typedef struct dn_dataset dn_dataset;

/* IDX image/label pair; raw or gzip, auto-detected. */
dn_status dn_dataset_open(const char* images_path, const char* labels_path, dn_dataset** out);
/* First count samples of an existing dataset. */
dn_status dn_dataset_head(const dn_dataset* ds, int64_t count, dn_dataset** out);
int64_t dn_dataset_size(const dn_dataset* ds);
void dn_dataset_close(dn_dataset* ds);

/* ---- models ------------------------------------------------------------ */

typedef struct dn_model dn_model;

typedef struct dn_cnn_options {
  int32_t conv1_filters; /* default 32 */
  int32_t conv2_filters; /* default 16 (flatten width 1936 on 28x28 input) */
  double dropout_conv;   /* default 0.25 */
  double dropout_dense;  /* default 0.5 */
} dn_cnn_options;

void dn_cnn_options_init(dn_cnn_options* opts);
dn_status dn_cnn_create(const dn_cnn_options* opts, uint64_t seed, dn_model** out);
dn_status dn_model_load(const char* path, dn_model** out);
dn_status dn_model_save(const dn_model* model, const char* path);
/* Architecture, per-layer parameter counts, stored epoch. Truncates to cap. */
dn_status dn_model_describe(const dn_model* model, char* buf, size_t cap);
/* Completed training epochs stored in the model. */
int32_t dn_model_epoch(const dn_model* model);
/* Number of conv layers (ordinals 1..n for the analysis calls). */
int32_t dn_model_conv_layers(const dn_model* model);
void dn_model_close(dn_model* model);

/* ---- training and evaluation ------------------------------------------- */

typedef struct dn_epoch_metrics {
  int32_t epoch;
  double train_loss;
  double train_acc;
  double val_loss;
  double val_acc;
  double wall_seconds;
} dn_epoch_metrics;

typedef void (*dn_epoch_cb)(const dn_epoch_metrics* m, void* user);

typedef struct dn_train_options {
  int32_t epochs;      /* total target, default 50 */
  int32_t batch_size;  /* default 128 */
  double lr0;          /* default 0.001 */
  double decay;        /* default 1e-6, applied as lr0/(1+decay*t) */
  double momentum;     /* default 0.9 */
  int32_t nesterov;    /* default 1 */
  uint64_t seed;       /* default 42 */
  int32_t deterministic; /* default 1: bitwise-stable outputs per seed */
  int64_t limit_train; /* 0 = full */
  int64_t limit_eval;  /* 0 = full */
  dn_epoch_cb on_epoch;
  void* user;
} dn_train_options;

void dn_train_options_init(dn_train_options* opts);

typedef struct dn_metrics dn_metrics;

/* Trains from the model's stored epoch up to opts->epochs. The model's
 * creation seed governs initialization; opts->seed governs shuffling and
 * dropout. val may be NULL. out_metrics may be NULL. */
dn_status dn_train(dn_model* model, const dn_train_options* opts, const dn_dataset* train,
                   const dn_dataset* val, dn_metrics** out_metrics);

dn_status dn_evaluate(const dn_model* model, const dn_dataset* ds, double* loss, double* accuracy);

int64_t dn_metrics_count(const dn_metrics* m);
dn_status dn_metrics_get(const dn_metrics* m, int64_t index, dn_epoch_metrics* out);
/* CSV: epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds. In
 * deterministic mode wall_seconds is written as 0. */
dn_status dn_metrics_write_csv(const dn_metrics* m, const char* path);
/* loss.pgm and accuracy.pgm under out_dir. */
dn_status dn_metrics_write_plots(const dn_metrics* m, const char* out_dir);
void dn_metrics_close(dn_metrics* m);

/* ---- filter similarity analysis ----------------------------------------- */

typedef struct dn_report dn_report;

typedef struct dn_similarity_row {
  int32_t layer;   /* 1-based conv ordinal */
  int32_t kernel;  /* kernel side length */
  int32_t filters;
  double threshold;
  int64_t pair_count;
  int64_t total_pairs;
  double ratio;
} dn_similarity_row;

/* One row per (conv layer, threshold); thresholds in (-1,1]. */
dn_status dn_similarity_run(const dn_model* model, const double* thresholds, int32_t n_thresholds,
                            int32_t abs_similarity, dn_report** out);

typedef struct dn_sweep_options {
  const int32_t* filter_counts; /* NULL = {32,64,128,256} */
  int32_t n_filter_counts;
  const double* thresholds; /* NULL = {0.5,0.6} */
  int32_t n_thresholds;
  int32_t abs_similarity;
  int32_t epochs;      /* default 1 */
  int32_t batch_size;  /* default 128 */
  double lr0;          /* default 0.001 */
  int64_t limit_train; /* 0 = full */
  uint64_t seed;       /* default 42 */
} dn_sweep_options;

void dn_sweep_options_init(dn_sweep_options* opts);

/* Trains one network per filter count and reports every
 * (layer, count, threshold) combination. */
dn_status dn_sweep_run(const dn_sweep_options* opts, const dn_dataset* train, dn_report** out);

int64_t dn_report_rows(const dn_report* report);
dn_status dn_report_row(const dn_report* report, int64_t index, dn_similarity_row* out);
/* similarity.csv plus per-row pair listings under out_dir. */
dn_status dn_report_write(const dn_report* report, const char* out_dir);
void dn_report_close(dn_report* report);

/* filters_layer{conv_ordinal}.pgm-style grid of one conv layer's kernels. */
dn_status dn_export_filters(const dn_model* model, int32_t conv_ordinal, const char* path);
/* Grid of post-ReLU activation maps for one test image. */
dn_status dn_export_activations(const dn_model* model, const dn_dataset* ds, int64_t image_index,
                                int32_t conv_ordinal, const char* path);
/* Most similar filter pair at or above threshold: kernels + activation
 * maps. *found is set to 0/1; no file is written when no pair qualifies.
 * filter_i/filter_j/similarity (each nullable) receive the rendered pair. */
dn_status dn_export_similar_pair(const dn_model* model, const dn_dataset* ds, int64_t image_index,
                                 int32_t conv_ordinal, double threshold, int32_t abs_similarity,
                                 const char* path, int32_t* found, int32_t* filter_i,
                                 int32_t* filter_j, double* similarity);

/* ---- autoencoder -------------------------------------------------------- */

typedef struct dn_ae dn_ae;
typedef void (*dn_ae_epoch_cb)(int32_t epoch, double mse, void* user);

typedef struct dn_ae_options {
  int32_t latent; /* default 32 */
  int32_t epochs; /* default 5 */
  int32_t batch_size;
  double lr0; /* default 0.1: mean-pixel MSE gradients are 1/784-scaled */
  double decay;
  double momentum;
  int32_t nesterov;
  uint64_t seed;
  int64_t limit_train; /* 0 = full */
  dn_ae_epoch_cb on_epoch;
  void* user;
} dn_ae_options;

void dn_ae_options_init(dn_ae_options* opts);
dn_status dn_ae_train(const dn_ae_options* opts, const dn_dataset* ds, dn_ae** out);
/* CSV: epoch,mse. */
dn_status dn_ae_write_loss_csv(const dn_ae* ae, const char* path);
/* Originals above reconstructions, `pairs` columns. */
dn_status dn_ae_export_grid(const dn_ae* ae, const dn_dataset* ds, int32_t pairs,
                            const char* path);
void dn_ae_close(dn_ae* ae);

/* ---- variational autoencoder --------------------------------------------- */

typedef struct dn_vae dn_vae;
typedef void (*dn_vae_epoch_cb)(int32_t epoch, double recon, double kl, double total, void* user);

typedef struct dn_vae_options {
  int32_t latent; /* default 20 */
  int32_t hidden; /* default 400 */
  int32_t mse_recon; /* default 0: Bernoulli cross-entropy */
  int32_t epochs; /* default 5 */
  int32_t batch_size;
  double lr0;
  double decay;
  double momentum;
  int32_t nesterov;
  uint64_t seed;
  int64_t limit_train; /* 0 = full */
  dn_vae_epoch_cb on_epoch;
  void* user;
} dn_vae_options;

void dn_vae_options_init(dn_vae_options* opts);
dn_status dn_vae_train(const dn_vae_options* opts, const dn_dataset* ds, dn_vae** out);
/* CSV: epoch,recon,kl,total. */
dn_status dn_vae_write_loss_csv(const dn_vae* vae, const char* path);
/* rows x cols grid of prior samples, seeded independently of training. */
dn_status dn_vae_export_samples(const dn_vae* vae, int32_t rows, int32_t cols, uint64_t seed,
                                const char* path);
void dn_vae_close(dn_vae* vae);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DIGITNET_H */
