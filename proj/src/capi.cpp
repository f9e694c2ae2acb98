#include "digitnet.h"

#include <cstring>
#include <memory>
#include <string>

#include "digitnet/analysis.hpp"
#include "digitnet/autoencoder.hpp"
#include "digitnet/trainer.hpp"

using namespace digitnet;

struct dn_dataset {
  Dataset ds;
};
struct dn_model {
  TrainerSession session;
};
struct dn_metrics {
  std::vector<EpochMetrics> rows;
  bool deterministic = true;
};
struct dn_report {
  AnalysisReport report;
};
struct dn_ae {
  AeResult result;
};
struct dn_vae {
  VaeResult result;
};

namespace {

thread_local std::string t_last_error;

void set_error(const std::string& msg) { t_last_error = msg; }

dn_status map_category(ErrorCategory cat) {
  switch (cat) {
    case ErrorCategory::user: return DN_USER_ERROR;
    case ErrorCategory::format: return DN_FORMAT_ERROR;
    case ErrorCategory::internal: return DN_INTERNAL_ERROR;
  }
  return DN_INTERNAL_ERROR;
}

template <class Fn>
dn_status guarded(Fn&& fn) {
  try {
    fn();
    return DN_OK;
  } catch (const Error& e) {
    set_error(e.what());
    return map_category(e.category());
  } catch (const std::exception& e) {
    set_error(e.what());
    return DN_INTERNAL_ERROR;
  }
}

dn_status require(bool ok, const char* msg) {
  if (!ok) {
    set_error(msg);
    return DN_USER_ERROR;
  }
  return DN_OK;
}

// The artifact's input contract: 28x28 grayscale.
const std::vector<std::size_t> kInputShape{28, 28, 1};

TrainingConfig to_config(const dn_train_options& o, const dn_model& model) {
  TrainingConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size > 0 ? static_cast<std::size_t>(o.batch_size) : 0;
  cfg.seed = o.seed;
  cfg.sgd.lr0 = o.lr0;
  cfg.sgd.decay = o.decay;
  cfg.sgd.momentum = o.momentum;
  cfg.sgd.nesterov = o.nesterov != 0;
  cfg.architecture = model.session.net.layers();
  if (o.limit_train > 0) cfg.limit_train = static_cast<std::size_t>(o.limit_train);
  if (o.limit_eval > 0) cfg.limit_eval = static_cast<std::size_t>(o.limit_eval);
  cfg.deterministic = o.deterministic != 0;
  return cfg;
}

}  // namespace

extern "C" {

const char* dn_version(void) { return "0.1.0"; }

const char* dn_last_error(void) { return t_last_error.c_str(); }

/* ---- datasets ---------------------------------------------------------- */

dn_status dn_dataset_open(const char* images_path, const char* labels_path, dn_dataset** out) {
  if (dn_status s = require(images_path && labels_path && out, "dn_dataset_open: null argument"))
    return s;
  return guarded([&] {
    auto handle = std::make_unique<dn_dataset>();
    handle->ds = load_dataset(images_path, labels_path);
    *out = handle.release();
  });
}

dn_status dn_dataset_head(const dn_dataset* ds, int64_t count, dn_dataset** out) {
  if (dn_status s = require(ds && out, "dn_dataset_head: null argument")) return s;
  if (dn_status s = require(count > 0, "dn_dataset_head: count must be positive")) return s;
  return guarded([&] {
    auto handle = std::make_unique<dn_dataset>();
    handle->ds = dataset_head(ds->ds, static_cast<std::size_t>(count));
    *out = handle.release();
  });
}

int64_t dn_dataset_size(const dn_dataset* ds) {
  return ds ? static_cast<int64_t>(ds->ds.count()) : 0;
}

void dn_dataset_close(dn_dataset* ds) { delete ds; }

/* ---- models ------------------------------------------------------------ */

void dn_cnn_options_init(dn_cnn_options* opts) {
  if (!opts) return;
  opts->conv1_filters = 32;
  opts->conv2_filters = 16;
  opts->dropout_conv = 0.25;
  opts->dropout_dense = 0.5;
}

dn_status dn_cnn_create(const dn_cnn_options* opts, uint64_t seed, dn_model** out) {
  if (dn_status s = require(out != nullptr, "dn_cnn_create: null output")) return s;
  dn_cnn_options defaults;
  dn_cnn_options_init(&defaults);
  const dn_cnn_options& o = opts ? *opts : defaults;
  if (dn_status s = require(o.conv1_filters > 0 && o.conv2_filters > 0,
                            "dn_cnn_create: filter counts must be positive"))
    return s;
  return guarded([&] {
    auto handle = std::make_unique<dn_model>();
    handle->session = make_session_from_arch(
        default_architecture(static_cast<std::size_t>(o.conv1_filters),
                             static_cast<std::size_t>(o.conv2_filters), o.dropout_conv,
                             o.dropout_dense),
        seed);
    handle->session.net.shape_chain(kInputShape);
    *out = handle.release();
  });
}

dn_status dn_model_load(const char* path, dn_model** out) {
  if (dn_status s = require(path && out, "dn_model_load: null argument")) return s;
  return guarded([&] {
    auto handle = std::make_unique<dn_model>();
    handle->session = session_from_checkpoint(load_checkpoint(path));
    *out = handle.release();
  });
}

dn_status dn_model_save(const dn_model* model, const char* path) {
  if (dn_status s = require(model && path, "dn_model_save: null argument")) return s;
  return guarded([&] { save_checkpoint(path, checkpoint_from_session(model->session)); });
}

dn_status dn_model_describe(const dn_model* model, char* buf, size_t cap) {
  if (dn_status s = require(model && buf && cap > 0, "dn_model_describe: null argument")) return s;
  return guarded([&] {
    std::string text = "epoch: " + std::to_string(model->session.epochs_done) + "\n" +
                       model->session.net.describe(kInputShape);
    if (text.size() >= cap) text.resize(cap - 1);
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

int32_t dn_model_epoch(const dn_model* model) {
  return model ? model->session.epochs_done : -1;
}

int32_t dn_model_conv_layers(const dn_model* model) {
  return model ? static_cast<int32_t>(model->session.net.conv_layer_indices().size()) : 0;
}

void dn_model_close(dn_model* model) { delete model; }

/* ---- training ----------------------------------------------------------- */

void dn_train_options_init(dn_train_options* opts) {
  if (!opts) return;
  opts->epochs = 50;
  opts->batch_size = 128;
  opts->lr0 = 0.001;
  opts->decay = 1e-6;
  opts->momentum = 0.9;
  opts->nesterov = 1;
  opts->seed = 42;
  opts->deterministic = 1;
  opts->limit_train = 0;
  opts->limit_eval = 0;
  opts->on_epoch = nullptr;
  opts->user = nullptr;
}

dn_status dn_train(dn_model* model, const dn_train_options* opts, const dn_dataset* train,
                   const dn_dataset* val, dn_metrics** out_metrics) {
  if (dn_status s = require(model && train, "dn_train: null argument")) return s;
  dn_train_options defaults;
  dn_train_options_init(&defaults);
  const dn_train_options& o = opts ? *opts : defaults;
  return guarded([&] {
    // A fresh model adopts the run seed; a resumed model keeps the seed it
    // was trained with so epoch k+1 reproduces the uninterrupted run.
    if (model->session.epochs_done == 0) model->session.base_seed = o.seed;
    const TrainingConfig cfg = to_config(o, *model);
    EpochCallback cb;
    if (o.on_epoch) {
      cb = [&o](const EpochMetrics& em) {
        dn_epoch_metrics m{em.epoch, em.train_loss, em.train_acc,
                           em.val_loss, em.val_acc, em.wall_seconds};
        o.on_epoch(&m, o.user);
      };
    }
    const std::vector<EpochMetrics> rows =
        run_training(model->session, cfg, train->ds, val ? &val->ds : nullptr, cb);
    if (out_metrics) {
      auto handle = std::make_unique<dn_metrics>();
      handle->rows = rows;
      handle->deterministic = cfg.deterministic;
      *out_metrics = handle.release();
    }
  });
}

dn_status dn_evaluate(const dn_model* model, const dn_dataset* ds, double* loss,
                      double* accuracy) {
  if (dn_status s = require(model && ds, "dn_evaluate: null argument")) return s;
  return guarded([&] {
    const auto [l, a] = evaluate(model->session.net, ds->ds);
    if (loss) *loss = l;
    if (accuracy) *accuracy = a;
  });
}

int64_t dn_metrics_count(const dn_metrics* m) {
  return m ? static_cast<int64_t>(m->rows.size()) : 0;
}

dn_status dn_metrics_get(const dn_metrics* m, int64_t index, dn_epoch_metrics* out) {
  if (dn_status s = require(m && out, "dn_metrics_get: null argument")) return s;
  if (dn_status s = require(index >= 0 && index < static_cast<int64_t>(m->rows.size()),
                            "dn_metrics_get: index out of range"))
    return s;
  const EpochMetrics& em = m->rows[static_cast<std::size_t>(index)];
  *out = {em.epoch, em.train_loss, em.train_acc, em.val_loss, em.val_acc, em.wall_seconds};
  return DN_OK;
}

dn_status dn_metrics_write_csv(const dn_metrics* m, const char* path) {
  if (dn_status s = require(m && path, "dn_metrics_write_csv: null argument")) return s;
  return guarded([&] { export_metrics_csv(m->rows, path, m->deterministic); });
}

dn_status dn_metrics_write_plots(const dn_metrics* m, const char* out_dir) {
  if (dn_status s = require(m && out_dir, "dn_metrics_write_plots: null argument")) return s;
  return guarded([&] { plot_metrics(m->rows, out_dir); });
}

void dn_metrics_close(dn_metrics* m) { delete m; }

/* ---- analysis ------------------------------------------------------------ */

dn_status dn_similarity_run(const dn_model* model, const double* thresholds, int32_t n_thresholds,
                            int32_t abs_similarity, dn_report** out) {
  if (dn_status s = require(model && thresholds && out, "dn_similarity_run: null argument"))
    return s;
  if (dn_status s = require(n_thresholds > 0, "dn_similarity_run: need at least one threshold"))
    return s;
  return guarded([&] {
    auto handle = std::make_unique<dn_report>();
    handle->report = analyze_network(
        model->session.net, std::vector<double>(thresholds, thresholds + n_thresholds),
        abs_similarity != 0);
    *out = handle.release();
  });
}

void dn_sweep_options_init(dn_sweep_options* opts) {
  if (!opts) return;
  opts->filter_counts = nullptr;
  opts->n_filter_counts = 0;
  opts->thresholds = nullptr;
  opts->n_thresholds = 0;
  opts->abs_similarity = 0;
  opts->epochs = 1;
  opts->batch_size = 128;
  opts->lr0 = 0.001;
  opts->limit_train = 0;
  opts->seed = 42;
}

dn_status dn_sweep_run(const dn_sweep_options* opts, const dn_dataset* train, dn_report** out) {
  if (dn_status s = require(train && out, "dn_sweep_run: null argument")) return s;
  dn_sweep_options defaults;
  dn_sweep_options_init(&defaults);
  const dn_sweep_options& o = opts ? *opts : defaults;
  return guarded([&] {
    SweepConfig cfg;
    if (o.filter_counts && o.n_filter_counts > 0) {
      cfg.filter_counts.assign(o.filter_counts, o.filter_counts + o.n_filter_counts);
    }
    if (o.thresholds && o.n_thresholds > 0) {
      cfg.thresholds.assign(o.thresholds, o.thresholds + o.n_thresholds);
    }
    cfg.abs_similarity = o.abs_similarity != 0;
    cfg.epochs = o.epochs;
    cfg.batch_size = static_cast<std::size_t>(o.batch_size);
    cfg.sgd.lr0 = o.lr0;
    if (o.limit_train > 0) cfg.limit_train = static_cast<std::size_t>(o.limit_train);
    cfg.seed = o.seed;
    auto handle = std::make_unique<dn_report>();
    handle->report = sweep(cfg, train->ds);
    *out = handle.release();
  });
}

int64_t dn_report_rows(const dn_report* report) {
  return report ? static_cast<int64_t>(report->report.rows.size()) : 0;
}

dn_status dn_report_row(const dn_report* report, int64_t index, dn_similarity_row* out) {
  if (dn_status s = require(report && out, "dn_report_row: null argument")) return s;
  if (dn_status s = require(index >= 0 && index < static_cast<int64_t>(report->report.rows.size()),
                            "dn_report_row: index out of range"))
    return s;
  const SimilarPairReport& r = report->report.rows[static_cast<std::size_t>(index)];
  out->layer = static_cast<int32_t>(r.layer_index);
  out->kernel = static_cast<int32_t>(r.kernel);
  out->filters = static_cast<int32_t>(r.n);
  out->threshold = r.threshold;
  out->pair_count = static_cast<int64_t>(r.pairs.size());
  out->total_pairs = static_cast<int64_t>(r.total_pairs);
  out->ratio = r.ratio;
  return DN_OK;
}

dn_status dn_report_write(const dn_report* report, const char* out_dir) {
  if (dn_status s = require(report && out_dir, "dn_report_write: null argument")) return s;
  return guarded([&] {
    write_report_csv(report->report, std::string(out_dir) + "/similarity.csv");
    write_report_details(report->report, out_dir);
  });
}

void dn_report_close(dn_report* report) { delete report; }

dn_status dn_export_filters(const dn_model* model, int32_t conv_ordinal, const char* path) {
  if (dn_status s = require(model && path, "dn_export_filters: null argument")) return s;
  return guarded([&] {
    const auto conv_idx = model->session.net.conv_layer_indices();
    if (conv_ordinal < 1 || static_cast<std::size_t>(conv_ordinal) > conv_idx.size()) {
      throw DomainError("conv layer ordinal out of range");
    }
    write_pgm(render_filters(model->session.net.params()[conv_idx[conv_ordinal - 1]].weights),
              path);
  });
}

dn_status dn_export_activations(const dn_model* model, const dn_dataset* ds, int64_t image_index,
                                int32_t conv_ordinal, const char* path) {
  if (dn_status s = require(model && ds && path, "dn_export_activations: null argument")) return s;
  return guarded([&] {
    const Tensor image = ds->ds.image(static_cast<std::size_t>(image_index));
    write_pgm(render_activations(model->session.net, image,
                                 static_cast<std::size_t>(conv_ordinal)),
              path);
  });
}

dn_status dn_export_similar_pair(const dn_model* model, const dn_dataset* ds, int64_t image_index,
                                 int32_t conv_ordinal, double threshold, int32_t abs_similarity,
                                 const char* path, int32_t* found, int32_t* filter_i,
                                 int32_t* filter_j, double* similarity) {
  if (dn_status s = require(model && ds && path, "dn_export_similar_pair: null argument")) return s;
  return guarded([&] {
    const Tensor image = ds->ds.image(static_cast<std::size_t>(image_index));
    GrayImage img;
    SimilarPair top{};
    const bool ok = render_similar_pair(model->session.net, image,
                                        static_cast<std::size_t>(conv_ordinal), threshold,
                                        abs_similarity != 0, img, &top);
    if (ok) write_pgm(img, path);
    if (found) *found = ok ? 1 : 0;
    if (filter_i) *filter_i = ok ? static_cast<int32_t>(top.i) : -1;
    if (filter_j) *filter_j = ok ? static_cast<int32_t>(top.j) : -1;
    if (similarity) *similarity = ok ? top.similarity : 0.0;
  });
}

/* ---- autoencoder ----------------------------------------------------------- */

void dn_ae_options_init(dn_ae_options* opts) {
  if (!opts) return;
  opts->latent = 32;
  opts->epochs = 5;
  opts->batch_size = 128;
  opts->lr0 = 0.1;
  opts->decay = 1e-6;
  opts->momentum = 0.9;
  opts->nesterov = 1;
  opts->seed = 42;
  opts->limit_train = 0;
  opts->on_epoch = nullptr;
  opts->user = nullptr;
}

dn_status dn_ae_train(const dn_ae_options* opts, const dn_dataset* ds, dn_ae** out) {
  if (dn_status s = require(ds && out, "dn_ae_train: null argument")) return s;
  dn_ae_options defaults;
  dn_ae_options_init(&defaults);
  const dn_ae_options& o = opts ? *opts : defaults;
  return guarded([&] {
    AeConfig cfg;
    cfg.latent = static_cast<std::size_t>(o.latent);
    cfg.epochs = o.epochs;
    cfg.batch_size = static_cast<std::size_t>(o.batch_size);
    cfg.sgd.lr0 = o.lr0;
    cfg.sgd.decay = o.decay;
    cfg.sgd.momentum = o.momentum;
    cfg.sgd.nesterov = o.nesterov != 0;
    cfg.seed = o.seed;
    if (o.limit_train > 0) cfg.limit_train = static_cast<std::size_t>(o.limit_train);
    AeCallback cb;
    if (o.on_epoch) {
      cb = [&o](const AePoint& p) { o.on_epoch(p.epoch, p.mse, o.user); };
    }
    auto handle = std::make_unique<dn_ae>();
    handle->result = ae_train(cfg, ds->ds, cb);
    *out = handle.release();
  });
}

dn_status dn_ae_write_loss_csv(const dn_ae* ae, const char* path) {
  if (dn_status s = require(ae && path, "dn_ae_write_loss_csv: null argument")) return s;
  return guarded([&] { ae_write_curve_csv(ae->result.curve, path); });
}

dn_status dn_ae_export_grid(const dn_ae* ae, const dn_dataset* ds, int32_t pairs,
                            const char* path) {
  if (dn_status s = require(ae && ds && path, "dn_ae_export_grid: null argument")) return s;
  return guarded([&] {
    write_pgm(ae_reconstruction_grid(ae->result.model, ds->ds, static_cast<std::size_t>(pairs)),
              path);
  });
}

void dn_ae_close(dn_ae* ae) { delete ae; }

/* ---- variational autoencoder -------------------------------------------------- */

void dn_vae_options_init(dn_vae_options* opts) {
  if (!opts) return;
  opts->latent = 20;
  opts->hidden = 400;
  opts->mse_recon = 0;
  opts->epochs = 5;
  opts->batch_size = 128;
  opts->lr0 = 0.001;
  opts->decay = 1e-6;
  opts->momentum = 0.9;
  opts->nesterov = 1;
  opts->seed = 42;
  opts->limit_train = 0;
  opts->on_epoch = nullptr;
  opts->user = nullptr;
}

dn_status dn_vae_train(const dn_vae_options* opts, const dn_dataset* ds, dn_vae** out) {
  if (dn_status s = require(ds && out, "dn_vae_train: null argument")) return s;
  dn_vae_options defaults;
  dn_vae_options_init(&defaults);
  const dn_vae_options& o = opts ? *opts : defaults;
  return guarded([&] {
    VaeConfig cfg;
    cfg.latent = static_cast<std::size_t>(o.latent);
    cfg.hidden = static_cast<std::size_t>(o.hidden);
    cfg.mse_recon = o.mse_recon != 0;
    cfg.epochs = o.epochs;
    cfg.batch_size = static_cast<std::size_t>(o.batch_size);
    cfg.sgd.lr0 = o.lr0;
    cfg.sgd.decay = o.decay;
    cfg.sgd.momentum = o.momentum;
    cfg.sgd.nesterov = o.nesterov != 0;
    cfg.seed = o.seed;
    if (o.limit_train > 0) cfg.limit_train = static_cast<std::size_t>(o.limit_train);
    VaeCallback cb;
    if (o.on_epoch) {
      cb = [&o](const VaePoint& p) { o.on_epoch(p.epoch, p.recon, p.kl, p.total, o.user); };
    }
    auto handle = std::make_unique<dn_vae>();
    handle->result = vae_train(cfg, ds->ds, cb);
    *out = handle.release();
  });
}

dn_status dn_vae_write_loss_csv(const dn_vae* vae, const char* path) {
  if (dn_status s = require(vae && path, "dn_vae_write_loss_csv: null argument")) return s;
  return guarded([&] { vae_write_curve_csv(vae->result.curve, path); });
}

dn_status dn_vae_export_samples(const dn_vae* vae, int32_t rows, int32_t cols, uint64_t seed,
                                const char* path) {
  if (dn_status s = require(vae && path, "dn_vae_export_samples: null argument")) return s;
  return guarded([&] {
    SeededRng rng(derive_seed(seed, "vae-sample"));
    write_pgm(vae_sample_grid(vae->result.model, static_cast<std::size_t>(rows),
                              static_cast<std::size_t>(cols), rng),
              path);
  });
}

void dn_vae_close(dn_vae* vae) { delete vae; }

} /* extern "C" */
