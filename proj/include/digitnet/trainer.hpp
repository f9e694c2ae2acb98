#ifndef DIGITNET_TRAINER_HPP
#define DIGITNET_TRAINER_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "digitnet/layers.hpp"
#include "digitnet/loss.hpp"
#include "digitnet/mnist.hpp"

namespace digitnet {

/// The classifier trained by default: conv 3x3 -> relu -> conv 5x5 -> relu
/// -> maxpool 2 -> dropout -> flatten -> dense 128 -> dense 50 -> dense 10
/// -> softmax. With 16 second-stage filters the flatten width on 28x28
/// input is 11*11*16 = 1936.
std::vector<LayerSpec> default_architecture(std::size_t conv1_filters = 32,
                                            std::size_t conv2_filters = 16,
                                            double dropout_conv = 0.25,
                                            double dropout_dense = 0.5);

struct TrainingConfig {
  int epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 42;
  SgdConfig sgd;
  std::vector<LayerSpec> architecture;  // empty -> default_architecture()
  std::optional<std::size_t> limit_train;
  std::optional<std::size_t> limit_eval;
  bool deterministic = true;
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Everything training evolves; serialized one-to-one by checkpoints.
struct TrainerSession {
  Network net;
  OptimizerState opt;
  std::uint64_t base_seed = 0;
  SeededRng::State rng_state;
  int epochs_done = 0;
};

/// Fresh session for an architecture: parameters initialized from the
/// seed's "init" sub-stream, zero optimizer state.
TrainerSession make_session_from_arch(const std::vector<LayerSpec>& arch, std::uint64_t seed);

/// Builds and validates a fresh session for the config and data
/// (architecture/data compatibility errors surface here, before training).
TrainerSession make_session(const TrainingConfig& cfg, const Dataset& train_set);

/// Runs epochs epochs_done+1 .. cfg.epochs; appends one EpochMetrics per
/// epoch and invokes cb after each.
std::vector<EpochMetrics> run_training(TrainerSession& session, const TrainingConfig& cfg,
                                       const Dataset& train_set, const Dataset* eval_set,
                                       const EpochCallback& cb = {});

struct TrainResult {
  TrainerSession session;
  std::vector<EpochMetrics> metrics;
};

TrainResult train(const TrainingConfig& cfg, const Dataset& train_set, const Dataset* eval_set,
                  const EpochCallback& cb = {});

/// Eval-mode loss and accuracy over the whole dataset.
std::pair<double, double> evaluate(const Network& net, const Dataset& ds,
                                   std::size_t batch_size = 256);

// ---- checkpoints --------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::vector<LayerSpec> architecture;
  std::vector<LayerParams> params;
  OptimizerState opt;
  std::uint64_t base_seed = 0;
  SeededRng::State rng_state;
  int epoch = 0;
};

Checkpoint checkpoint_from_session(const TrainerSession& session);
TrainerSession session_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// ---- metrics export -----------------------------------------------------

/// CSV schema: epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds.
/// zero_wall writes 0 in the wall_seconds column (deterministic mode).
void export_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path,
                        bool zero_wall);
std::vector<EpochMetrics> parse_metrics_csv(const std::string& path);

/// loss.pgm and accuracy.pgm under out_dir.
void plot_metrics(const std::vector<EpochMetrics>& metrics, const std::string& out_dir);

/// "%.9g" formatting used by every CSV writer in the project.
std::string format_g9(double v);

}  // namespace digitnet

#endif
