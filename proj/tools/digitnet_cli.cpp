// digitnet command-line interface. Everything below talks to the library
// through the C API in digitnet.h.

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "digitnet.h"

namespace fs = std::filesystem;

namespace {

const char* category_name(dn_status s) {
  switch (s) {
    case DN_USER_ERROR: return "user";
    case DN_FORMAT_ERROR: return "format";
    case DN_INTERNAL_ERROR: return "internal";
    default: return "ok";
  }
}

[[noreturn]] void fail(dn_status s) {
  std::fprintf(stderr, "error: %s: %s\n", category_name(s), dn_last_error());
  std::exit(static_cast<int>(s));
}

[[noreturn]] void fail_user(const std::string& msg) {
  std::fprintf(stderr, "error: user: %s\n", msg.c_str());
  std::exit(2);
}

void check(dn_status s) {
  if (s != DN_OK) fail(s);
}

struct DataPaths {
  std::string data_dir;
  std::string train_images, train_labels, test_images, test_labels;

  void add_flags(CLI::App* cmd, bool with_train = true, bool with_test = true) {
    cmd->add_option("--data-dir", data_dir,
                    "Directory holding the four MNIST IDX files (raw or .gz)");
    if (with_train) {
      cmd->add_option("--train-images", train_images, "Training images IDX file");
      cmd->add_option("--train-labels", train_labels, "Training labels IDX file");
    }
    if (with_test) {
      cmd->add_option("--test-images", test_images, "Test images IDX file");
      cmd->add_option("--test-labels", test_labels, "Test labels IDX file");
    }
  }

  static std::string find_in_dir(const std::string& dir, const std::string& base) {
    const fs::path raw = fs::path(dir) / base;
    if (fs::exists(raw)) return raw.string();
    const fs::path gz = fs::path(dir) / (base + ".gz");
    if (fs::exists(gz)) return gz.string();
    return {};
  }

  std::string resolve(const std::string& explicit_path, const std::string& base) const {
    if (!explicit_path.empty()) return explicit_path;
    if (!data_dir.empty()) return find_in_dir(data_dir, base);
    return {};
  }

  std::string train_images_path() const { return resolve(train_images, "train-images-idx3-ubyte"); }
  std::string train_labels_path() const { return resolve(train_labels, "train-labels-idx1-ubyte"); }
  std::string test_images_path() const { return resolve(test_images, "t10k-images-idx3-ubyte"); }
  std::string test_labels_path() const { return resolve(test_labels, "t10k-labels-idx1-ubyte"); }
};

dn_dataset* open_required(const std::string& images, const std::string& labels, const char* what) {
  if (images.empty() || labels.empty()) {
    fail_user(std::string("missing ") + what +
              " data; pass --data-dir or the explicit IDX paths");
  }
  dn_dataset* ds = nullptr;
  check(dn_dataset_open(images.c_str(), labels.c_str(), &ds));
  return ds;
}

dn_dataset* open_optional(const std::string& images, const std::string& labels) {
  if (images.empty() || labels.empty()) return nullptr;
  dn_dataset* ds = nullptr;
  check(dn_dataset_open(images.c_str(), labels.c_str(), &ds));
  return ds;
}

void make_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail_user("cannot create output directory " + out + ": " + ec.message());
}

void print_epoch(const dn_epoch_metrics* m, void* user) {
  const int total = *static_cast<int*>(user);
  std::printf("epoch %d/%d  train_loss %.6f  train_acc %.4f  val_loss %.6f  val_acc %.4f  [%.1fs]\n",
              m->epoch, total, m->train_loss, m->train_acc, m->val_loss, m->val_acc,
              m->wall_seconds);
  std::fflush(stdout);
}

struct CommonOpts {
  std::uint64_t seed = 42;
  std::string out = "out";
  bool deterministic = true;
  std::string config_file;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Base seed; all randomness derives from it");
    cmd->add_option("--out", out, "Output directory (created if absent)");
    cmd->add_flag("--deterministic,!--no-deterministic", deterministic,
                  "Bitwise-reproducible outputs per seed (default on)");
    cmd->add_option("--config", config_file,
                    "Flat key=value file of long option names; flags override it");
  }
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Expands `--config <file>` into `--key=value` tokens inserted right after
// the subcommand name, so explicit command-line flags keep priority.
std::vector<std::string> expand_config(std::vector<std::string> tokens) {
  std::string path;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == "--config" && i + 1 < tokens.size()) {
      path = tokens[i + 1];
    } else if (tokens[i].rfind("--config=", 0) == 0) {
      path = tokens[i].substr(9);
    }
  }
  if (path.empty()) return tokens;
  std::ifstream in(path);
  if (!in) fail_user("cannot open config file: " + path);
  std::vector<std::string> injected;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string entry = trim(line);
    if (entry.empty() || entry[0] == '#') continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      fail_user("config " + path + " line " + std::to_string(line_no) + " is not key=value");
    }
    const std::string key = trim(entry.substr(0, eq));
    const std::string value = trim(entry.substr(eq + 1));
    if (key.empty()) {
      fail_user("config " + path + " line " + std::to_string(line_no) + " has an empty key");
    }
    const std::string flag = "--" + key;
    bool given_on_cmdline = false;
    for (const std::string& t : tokens) {
      if (t == flag || t.rfind(flag + "=", 0) == 0) {
        given_on_cmdline = true;
        break;
      }
    }
    if (!given_on_cmdline) injected.push_back(flag + "=" + value);
  }
  if (!tokens.empty()) {
    tokens.insert(tokens.begin() + 1, injected.begin(), injected.end());
  }
  return tokens;
}

int run(int argc, char** argv);

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 4;
  }
}

namespace {

int run(int argc, char** argv) {
  CLI::App app{"digitnet: small-CNN MNIST training, filter-similarity analysis, AE/VAE"};
  app.require_subcommand(1);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Train the CNN classifier");
  CommonOpts train_common;
  DataPaths train_data;
  train_common.add_flags(train_cmd);
  train_data.add_flags(train_cmd);
  int epochs = 50;
  int batch_size = 128;
  double lr0 = 0.001, decay = 1e-6, momentum = 0.9;
  bool nesterov = true;
  int conv1 = 32, conv2 = 16;
  double dropout_conv = 0.25, dropout_dense = 0.5;
  std::int64_t limit_train = 0, limit_eval = 0;
  std::string resume;
  train_cmd->add_option("--epochs", epochs, "Total training epochs");
  train_cmd->add_option("--batch-size", batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", lr0, "Initial learning rate");
  train_cmd->add_option("--decay", decay, "Learning-rate decay: lr0/(1+decay*t)");
  train_cmd->add_option("--momentum", momentum, "Momentum coefficient");
  train_cmd->add_flag("--nesterov,!--no-nesterov", nesterov, "Nesterov momentum (default on)");
  train_cmd->add_option("--conv1-filters", conv1, "Filters in the first conv layer");
  train_cmd->add_option("--conv2-filters", conv2, "Filters in the second conv layer");
  train_cmd->add_option("--dropout-conv", dropout_conv, "Dropout rate after the conv block");
  train_cmd->add_option("--dropout-dense", dropout_dense, "Dropout rate after hidden dense layers");
  train_cmd->add_option("--limit-train", limit_train, "Cap on training samples (0 = all)");
  train_cmd->add_option("--limit-eval", limit_eval, "Cap on validation samples (0 = all)");
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  CommonOpts eval_common;
  DataPaths eval_data;
  eval_common.add_flags(eval_cmd);
  eval_data.add_flags(eval_cmd, /*with_train=*/false, /*with_test=*/true);
  std::string eval_checkpoint;
  std::int64_t eval_limit = 0;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--limit-eval", eval_limit, "Cap on evaluated samples (0 = all)");

  // ---- analyze ----
  auto* analyze_cmd = app.add_subcommand("analyze", "Cosine-similarity filter analysis");
  CommonOpts analyze_common;
  DataPaths analyze_data;
  analyze_common.add_flags(analyze_cmd);
  analyze_data.add_flags(analyze_cmd);
  std::string analyze_checkpoint;
  bool do_sweep = false;
  std::vector<double> thresholds{0.5, 0.6};
  bool abs_similarity = false;
  std::vector<int> sweep_counts{32, 64, 128, 256};
  int sweep_epochs = 1;
  std::int64_t analyze_limit_train = 0;
  std::int64_t image_index = 0;
  analyze_cmd->add_option("--checkpoint", analyze_checkpoint, "Analyze this checkpoint");
  analyze_cmd->add_flag("--sweep", do_sweep,
                        "Train and analyze one network per filter count");
  analyze_cmd->add_option("--thresholds", thresholds, "Similarity thresholds in (-1,1]")
      ->delimiter(',');
  analyze_cmd->add_flag("--abs-similarity", abs_similarity,
                        "Compare |cosine| against the threshold");
  analyze_cmd->add_option("--sweep-filter-counts", sweep_counts, "Filter counts for --sweep")
      ->delimiter(',');
  analyze_cmd->add_option("--sweep-epochs", sweep_epochs, "Training epochs per sweep network");
  analyze_cmd->add_option("--limit-train", analyze_limit_train,
                          "Cap on sweep training samples (0 = all)");
  analyze_cmd->add_option("--image-index", image_index,
                          "Test image used for activation maps and pair visuals");

  // ---- ae ----
  auto* ae_cmd = app.add_subcommand("ae", "Train the 784->latent->784 autoencoder");
  CommonOpts ae_common;
  DataPaths ae_data;
  ae_common.add_flags(ae_cmd);
  ae_data.add_flags(ae_cmd);
  int ae_latent = 32, ae_epochs = 5, ae_batch = 128, ae_pairs = 8;
  double ae_lr = 0.1, ae_decay = 1e-6, ae_momentum = 0.9;
  bool ae_nesterov = true;
  std::int64_t ae_limit = 0;
  ae_cmd->add_option("--latent", ae_latent, "Encoder output width");
  ae_cmd->add_option("--epochs", ae_epochs, "Training epochs");
  ae_cmd->add_option("--batch-size", ae_batch, "Mini-batch size");
  ae_cmd->add_option("--lr", ae_lr, "Initial learning rate");
  ae_cmd->add_option("--decay", ae_decay, "Learning-rate decay");
  ae_cmd->add_option("--momentum", ae_momentum, "Momentum coefficient");
  ae_cmd->add_flag("--nesterov,!--no-nesterov", ae_nesterov, "Nesterov momentum (default on)");
  ae_cmd->add_option("--limit-train", ae_limit, "Cap on training samples (0 = all)");
  ae_cmd->add_option("--pairs", ae_pairs, "Original/reconstruction columns in the grid");

  // ---- vae ----
  auto* vae_cmd = app.add_subcommand("vae", "Train the variational autoencoder");
  CommonOpts vae_common;
  DataPaths vae_data;
  vae_common.add_flags(vae_cmd);
  vae_data.add_flags(vae_cmd);
  int vae_latent = 20, vae_hidden = 400, vae_epochs = 5, vae_batch = 128;
  int grid_rows = 8, grid_cols = 8;
  double vae_lr = 0.001, vae_decay = 1e-6, vae_momentum = 0.9;
  bool vae_nesterov = true, mse_recon = false;
  std::int64_t vae_limit = 0;
  vae_cmd->add_option("--latent", vae_latent, "Latent width");
  vae_cmd->add_option("--hidden", vae_hidden, "Hidden width");
  vae_cmd->add_flag("--mse-recon", mse_recon,
                    "Squared-error reconstruction term instead of cross-entropy");
  vae_cmd->add_option("--epochs", vae_epochs, "Training epochs");
  vae_cmd->add_option("--batch-size", vae_batch, "Mini-batch size");
  vae_cmd->add_option("--lr", vae_lr, "Initial learning rate");
  vae_cmd->add_option("--decay", vae_decay, "Learning-rate decay");
  vae_cmd->add_option("--momentum", vae_momentum, "Momentum coefficient");
  vae_cmd->add_flag("--nesterov,!--no-nesterov", vae_nesterov, "Nesterov momentum (default on)");
  vae_cmd->add_option("--limit-train", vae_limit, "Cap on training samples (0 = all)");
  vae_cmd->add_option("--grid-rows", grid_rows, "Sample grid rows");
  vae_cmd->add_option("--grid-cols", grid_cols, "Sample grid columns");

  // ---- inspect ----
  auto* inspect_cmd = app.add_subcommand("inspect", "Print a checkpoint summary");
  CommonOpts inspect_common;
  inspect_common.add_flags(inspect_cmd);
  std::string inspect_checkpoint;
  inspect_cmd->add_option("--checkpoint", inspect_checkpoint, "Checkpoint to describe")->required();

  try {
    std::vector<std::string> tokens = expand_config(std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(tokens.begin(), tokens.end());  // CLI11's vector overload wants reversed args
    app.parse(tokens);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: user: %s\n", e.what());
    return 2;
  }

  if (train_cmd->parsed()) {
    make_out_dir(train_common.out);
    dn_dataset* train_ds =
        open_required(train_data.train_images_path(), train_data.train_labels_path(), "training");
    dn_dataset* val_ds =
        open_optional(train_data.test_images_path(), train_data.test_labels_path());

    dn_model* model = nullptr;
    if (!resume.empty()) {
      check(dn_model_load(resume.c_str(), &model));
    } else {
      dn_cnn_options copts;
      dn_cnn_options_init(&copts);
      copts.conv1_filters = conv1;
      copts.conv2_filters = conv2;
      copts.dropout_conv = dropout_conv;
      copts.dropout_dense = dropout_dense;
      check(dn_cnn_create(&copts, train_common.seed, &model));
    }

    dn_train_options topts;
    dn_train_options_init(&topts);
    topts.epochs = epochs;
    topts.batch_size = batch_size;
    topts.lr0 = lr0;
    topts.decay = decay;
    topts.momentum = momentum;
    topts.nesterov = nesterov ? 1 : 0;
    topts.seed = train_common.seed;
    topts.deterministic = train_common.deterministic ? 1 : 0;
    topts.limit_train = limit_train;
    topts.limit_eval = limit_eval;
    topts.on_epoch = print_epoch;
    topts.user = &epochs;

    dn_metrics* metrics = nullptr;
    check(dn_train(model, &topts, train_ds, val_ds, &metrics));

    const int64_t n = dn_metrics_count(metrics);
    if (n == 0) {
      std::printf("nothing to do: checkpoint already has %d epochs (target %d)\n",
                  dn_model_epoch(model), epochs);
      dn_metrics_close(metrics);
      dn_model_close(model);
      dn_dataset_close(train_ds);
      dn_dataset_close(val_ds);
      return 0;
    }

    const std::string metrics_csv = train_common.out + "/metrics.csv";
    check(dn_metrics_write_csv(metrics, metrics_csv.c_str()));
    check(dn_metrics_write_plots(metrics, train_common.out.c_str()));
    const std::string ckpt = train_common.out + "/checkpoint.bin";
    check(dn_model_save(model, ckpt.c_str()));

    if (n > 0) {
      dn_epoch_metrics last{};
      check(dn_metrics_get(metrics, n - 1, &last));
      double best_val = 0.0, best_train = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        dn_epoch_metrics m{};
        check(dn_metrics_get(metrics, i, &m));
        if (m.val_acc > best_val) best_val = m.val_acc;
        if (m.train_acc > best_train) best_train = m.train_acc;
      }
      std::printf("final: train_acc %.6f  val_acc %.6f\n", last.train_acc, last.val_acc);
      std::printf("best:  train_acc %.6f  val_acc %.6f\n", best_train, best_val);
    }
    std::printf("wrote %s, loss.pgm, accuracy.pgm, %s\n", metrics_csv.c_str(), ckpt.c_str());

    dn_metrics_close(metrics);
    dn_model_close(model);
    dn_dataset_close(train_ds);
    dn_dataset_close(val_ds);
    return 0;
  }

  if (eval_cmd->parsed()) {
    make_out_dir(eval_common.out);
    dn_model* model = nullptr;
    check(dn_model_load(eval_checkpoint.c_str(), &model));
    dn_dataset* ds =
        open_required(eval_data.test_images_path(), eval_data.test_labels_path(), "test");
    if (eval_limit > 0) {
      dn_dataset* head = nullptr;
      check(dn_dataset_head(ds, eval_limit, &head));
      dn_dataset_close(ds);
      ds = head;
    }
    double loss = 0.0, acc = 0.0;
    check(dn_evaluate(model, ds, &loss, &acc));
    std::printf("samples %" PRId64 "  loss %.6f  accuracy %.6f\n", dn_dataset_size(ds), loss, acc);
    dn_dataset_close(ds);
    dn_model_close(model);
    return 0;
  }

  if (analyze_cmd->parsed()) {
    make_out_dir(analyze_common.out);
    if (!do_sweep && analyze_checkpoint.empty()) {
      fail_user("analyze needs --checkpoint or --sweep");
    }
    if (do_sweep && !analyze_checkpoint.empty()) {
      fail_user("--checkpoint and --sweep are mutually exclusive");
    }

    dn_report* report = nullptr;
    dn_model* model = nullptr;
    if (do_sweep) {
      dn_dataset* train_ds = open_required(analyze_data.train_images_path(),
                                           analyze_data.train_labels_path(), "training");
      dn_sweep_options sopts;
      dn_sweep_options_init(&sopts);
      std::vector<int32_t> counts(sweep_counts.begin(), sweep_counts.end());
      sopts.filter_counts = counts.data();
      sopts.n_filter_counts = static_cast<int32_t>(counts.size());
      sopts.thresholds = thresholds.data();
      sopts.n_thresholds = static_cast<int32_t>(thresholds.size());
      sopts.abs_similarity = abs_similarity ? 1 : 0;
      sopts.epochs = sweep_epochs;
      sopts.limit_train = analyze_limit_train;
      sopts.seed = analyze_common.seed;
      check(dn_sweep_run(&sopts, train_ds, &report));
      dn_dataset_close(train_ds);
    } else {
      check(dn_model_load(analyze_checkpoint.c_str(), &model));
      check(dn_similarity_run(model, thresholds.data(),
                              static_cast<int32_t>(thresholds.size()),
                              abs_similarity ? 1 : 0, &report));
    }

    check(dn_report_write(report, analyze_common.out.c_str()));
    const int64_t rows = dn_report_rows(report);
    std::printf("layer kernel filters threshold pairs total ratio\n");
    for (int64_t i = 0; i < rows; ++i) {
      dn_similarity_row r{};
      check(dn_report_row(report, i, &r));
      std::printf("%5d %6d %7d %9.3g %5" PRId64 " %5" PRId64 " %.6f\n", r.layer, r.kernel,
                  r.filters, r.threshold, r.pair_count, r.total_pairs, r.ratio);
    }
    std::printf("wrote %s/similarity.csv (%" PRId64 " rows)\n", analyze_common.out.c_str(), rows);

    if (model) {
      const int32_t conv_layers = dn_model_conv_layers(model);
      for (int32_t layer = 1; layer <= conv_layers; ++layer) {
        const std::string path =
            analyze_common.out + "/filters_layer" + std::to_string(layer) + ".pgm";
        check(dn_export_filters(model, layer, path.c_str()));
      }
      dn_dataset* test_ds =
          open_optional(analyze_data.test_images_path(), analyze_data.test_labels_path());
      if (test_ds) {
        for (int32_t layer = 1; layer <= conv_layers; ++layer) {
          const std::string act_path =
              analyze_common.out + "/activations_layer" + std::to_string(layer) + ".pgm";
          check(dn_export_activations(model, test_ds, image_index, layer, act_path.c_str()));
          for (double t : thresholds) {
            char tag[32];
            std::snprintf(tag, sizeof(tag), "%g", t);
            const std::string pair_path = analyze_common.out + "/pair_layer" +
                                          std::to_string(layer) + "_t" + tag + ".pgm";
            int32_t found = 0, fi = -1, fj = -1;
            double sim = 0.0;
            check(dn_export_similar_pair(model, test_ds, image_index, layer, t,
                                         abs_similarity ? 1 : 0, pair_path.c_str(), &found, &fi,
                                         &fj, &sim));
            if (found) {
              std::printf("layer %d threshold %s: top pair (%d,%d) similarity %.6f -> %s\n",
                          layer, tag, fi, fj, sim, pair_path.c_str());
            } else {
              std::printf("layer %d threshold %s: no pair at or above threshold\n", layer, tag);
            }
          }
        }
        dn_dataset_close(test_ds);
      }
      dn_model_close(model);
    }
    dn_report_close(report);
    return 0;
  }

  if (ae_cmd->parsed()) {
    make_out_dir(ae_common.out);
    dn_dataset* train_ds =
        open_required(ae_data.train_images_path(), ae_data.train_labels_path(), "training");
    dn_ae_options opts;
    dn_ae_options_init(&opts);
    opts.latent = ae_latent;
    opts.epochs = ae_epochs;
    opts.batch_size = ae_batch;
    opts.lr0 = ae_lr;
    opts.decay = ae_decay;
    opts.momentum = ae_momentum;
    opts.nesterov = ae_nesterov ? 1 : 0;
    opts.seed = ae_common.seed;
    opts.limit_train = ae_limit;
    opts.on_epoch = [](int32_t epoch, double mse_value, void*) {
      std::printf("epoch %d  mse %.6f\n", epoch, mse_value);
      std::fflush(stdout);
    };
    dn_ae* ae = nullptr;
    check(dn_ae_train(&opts, train_ds, &ae));
    const std::string csv = ae_common.out + "/ae_loss.csv";
    check(dn_ae_write_loss_csv(ae, csv.c_str()));
    dn_dataset* grid_ds =
        open_optional(ae_data.test_images_path(), ae_data.test_labels_path());
    const std::string grid = ae_common.out + "/ae_grid.pgm";
    check(dn_ae_export_grid(ae, grid_ds ? grid_ds : train_ds, ae_pairs, grid.c_str()));
    std::printf("wrote %s and %s\n", csv.c_str(), grid.c_str());
    if (grid_ds) dn_dataset_close(grid_ds);
    dn_ae_close(ae);
    dn_dataset_close(train_ds);
    return 0;
  }

  if (vae_cmd->parsed()) {
    make_out_dir(vae_common.out);
    dn_dataset* train_ds =
        open_required(vae_data.train_images_path(), vae_data.train_labels_path(), "training");
    dn_vae_options opts;
    dn_vae_options_init(&opts);
    opts.latent = vae_latent;
    opts.hidden = vae_hidden;
    opts.mse_recon = mse_recon ? 1 : 0;
    opts.epochs = vae_epochs;
    opts.batch_size = vae_batch;
    opts.lr0 = vae_lr;
    opts.decay = vae_decay;
    opts.momentum = vae_momentum;
    opts.nesterov = vae_nesterov ? 1 : 0;
    opts.seed = vae_common.seed;
    opts.limit_train = vae_limit;
    opts.on_epoch = [](int32_t epoch, double recon, double kl, double total, void*) {
      std::printf("epoch %d  recon %.3f  kl %.3f  total %.3f\n", epoch, recon, kl, total);
      std::fflush(stdout);
    };
    dn_vae* vae = nullptr;
    check(dn_vae_train(&opts, train_ds, &vae));
    const std::string csv = vae_common.out + "/vae_loss.csv";
    check(dn_vae_write_loss_csv(vae, csv.c_str()));
    const std::string grid = vae_common.out + "/vae_grid.pgm";
    check(dn_vae_export_samples(vae, grid_rows, grid_cols, vae_common.seed, grid.c_str()));
    std::printf("wrote %s and %s\n", csv.c_str(), grid.c_str());
    dn_vae_close(vae);
    dn_dataset_close(train_ds);
    return 0;
  }

  if (inspect_cmd->parsed()) {
    make_out_dir(inspect_common.out);
    dn_model* model = nullptr;
    check(dn_model_load(inspect_checkpoint.c_str(), &model));
    char buf[8192];
    check(dn_model_describe(model, buf, sizeof(buf)));
    std::printf("checkpoint: %s\n%s", inspect_checkpoint.c_str(), buf);
    dn_model_close(model);
    return 0;
  }

  return 0;
}

}  // namespace
