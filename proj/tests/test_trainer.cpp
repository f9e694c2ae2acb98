#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "digitnet/image.hpp"
#include "digitnet/trainer.hpp"
#include "support/testutil.hpp"

using namespace digitnet;
namespace tu = digitnet::testutil;

namespace {

TrainingConfig small_config(int epochs, std::size_t train_cap) {
  TrainingConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 64;
  cfg.seed = 11;
  cfg.architecture = default_architecture(4, 4, 0.1, 0.2);
  cfg.limit_train = train_cap;
  return cfg;
}

}  // namespace

TEST_CASE("epochs below one are rejected") {
  const Dataset ds = tu::make_synth_dataset(32, 1);
  TrainingConfig cfg = small_config(0, 32);
  CHECK_THROWS_AS(train(cfg, ds, nullptr), ConfigError);
}

TEST_CASE("limit larger than the dataset is rejected") {
  const Dataset ds = tu::make_synth_dataset(32, 1);
  TrainingConfig cfg = small_config(1, 64);
  CHECK_THROWS_AS(train(cfg, ds, nullptr), ConfigError);
}

TEST_CASE("architecture incompatible with the data fails before training") {
  const Dataset ds = tu::make_synth_dataset(16, 2);
  TrainingConfig cfg;
  cfg.epochs = 1;
  cfg.architecture = {LayerSpec::Dense(100, 10), LayerSpec::Softmax()};
  CHECK_THROWS_AS(make_session(cfg, ds), ConfigError);
}

TEST_CASE("identical seeds give identical metric sequences") {
  const Dataset ds = tu::make_synth_dataset(256, 3);
  const TrainingConfig cfg = small_config(2, 256);
  const TrainResult a = train(cfg, ds, &ds);
  const TrainResult b = train(cfg, ds, &ds);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    REQUIRE(a.metrics[i].train_loss == b.metrics[i].train_loss);
    REQUIRE(a.metrics[i].train_acc == b.metrics[i].train_acc);
    REQUIRE(a.metrics[i].val_loss == b.metrics[i].val_loss);
    REQUIRE(a.metrics[i].val_acc == b.metrics[i].val_acc);
  }
  // parameters match bitwise too
  const auto& pa = a.session.net.params();
  const auto& pb = b.session.net.params();
  for (std::size_t l = 0; l < pa.size(); ++l) {
    for (std::size_t i = 0; i < pa[l].weights.size(); ++i) {
      REQUIRE(pa[l].weights[i] == pb[l].weights[i]);
    }
  }
}

TEST_CASE("different seeds give different trajectories") {
  const Dataset ds = tu::make_synth_dataset(128, 4);
  TrainingConfig cfg = small_config(1, 128);
  const TrainResult a = train(cfg, ds, nullptr);
  cfg.seed = 12;
  const TrainResult b = train(cfg, ds, nullptr);
  CHECK(a.metrics[0].train_loss != b.metrics[0].train_loss);
}

TEST_CASE("train loss decreases over three epochs on a subset") {
  const Dataset ds = tu::make_synth_dataset(2000, 5);
  const TrainingConfig cfg = small_config(3, 2000);
  const TrainResult result = train(cfg, ds, nullptr);
  REQUIRE(result.metrics.size() == 3);
  CHECK(result.metrics[2].train_loss < result.metrics[0].train_loss);
}

TEST_CASE("evaluate: near-certain constant-truth network") {
  // all labels are 3 and the network always answers 3 with prob ~1
  Dataset ds = tu::make_synth_dataset(32, 6);
  for (std::size_t i = 0; i < ds.count(); ++i) {
    ds.labels[i] = 3;
    for (std::size_t j = 0; j < 10; ++j) ds.onehot[i * 10 + j] = j == 3 ? 1.0 : 0.0;
  }
  SeededRng rng(1);
  Network net = Network::build(
      {LayerSpec::Flatten(), LayerSpec::Dense(784, 10), LayerSpec::Softmax()}, rng);
  for (auto& p : net.params()) {
    for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] = 0.0;
    for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] = 0.0;
  }
  net.params()[1].bias[3] = 60.0;  // softmax(60 vs 0) ~ 1
  const auto [loss, acc] = evaluate(net, ds);
  CHECK(acc == 1.0);
  CHECK(loss < 1e-9);
}

TEST_CASE("evaluate: constant output scores the tie-break class fraction") {
  const Dataset fixture = load_dataset(tu::fixture_path("mini-images-idx3-ubyte"),
                                       tu::fixture_path("mini-labels-idx1-ubyte"));
  SeededRng rng(1);
  Network net = Network::build(
      {LayerSpec::Flatten(), LayerSpec::Dense(784, 10), LayerSpec::Softmax()}, rng);
  for (auto& p : net.params()) {
    for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] = 0.0;
    for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] = 0.0;
  }
  std::size_t zeros = 0;
  for (std::uint8_t label : fixture.labels) zeros += label == 0;
  const auto [loss, acc] = evaluate(net, fixture);
  CHECK(acc == doctest::Approx(static_cast<double>(zeros) / 64.0));
  CHECK(loss == doctest::Approx(std::log(10.0)));
}

TEST_CASE("evaluate on an empty dataset is a domain error") {
  SeededRng rng(1);
  Network net = Network::build({LayerSpec::Flatten(), LayerSpec::Dense(784, 10)}, rng);
  CHECK_THROWS_AS(evaluate(net, Dataset{}), DomainError);
}

TEST_CASE("checkpoint round-trip is bitwise") {
  const Dataset ds = tu::make_synth_dataset(128, 7);
  const TrainingConfig cfg = small_config(1, 128);
  TrainResult result = train(cfg, ds, nullptr);
  const std::string dir = tu::make_temp_dir("ckpt");
  const std::string path = dir + "/model.bin";
  save_checkpoint(path, checkpoint_from_session(result.session));

  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.format_version == kCheckpointVersion);
  CHECK(loaded.epoch == 1);
  CHECK(loaded.base_seed == cfg.seed);
  REQUIRE(loaded.params.size() == result.session.net.params().size());
  for (std::size_t l = 0; l < loaded.params.size(); ++l) {
    const auto& a = loaded.params[l];
    const auto& b = result.session.net.params()[l];
    REQUIRE(a.weights.shape() == b.weights.shape());
    for (std::size_t i = 0; i < a.weights.size(); ++i) REQUIRE(a.weights[i] == b.weights[i]);
    for (std::size_t i = 0; i < a.bias.size(); ++i) REQUIRE(a.bias[i] == b.bias[i]);
  }
  REQUIRE(loaded.opt.velocity.size() == result.session.opt.velocity.size());
  for (std::size_t k = 0; k < loaded.opt.velocity.size(); ++k) {
    for (std::size_t i = 0; i < loaded.opt.velocity[k].size(); ++i) {
      REQUIRE(loaded.opt.velocity[k][i] == result.session.opt.velocity[k][i]);
    }
  }
  CHECK(loaded.opt.iteration == result.session.opt.iteration);
  CHECK(loaded.rng_state.words == result.session.rng_state.words);

  // saving the reloaded checkpoint reproduces the same bytes
  const std::string path2 = dir + "/model2.bin";
  save_checkpoint(path2, loaded);
  CHECK(tu::read_bytes(path) == tu::read_bytes(path2));
}

TEST_CASE("corrupt checkpoints are rejected with format errors") {
  const Dataset ds = tu::make_synth_dataset(64, 8);
  TrainResult result = train(small_config(1, 64), ds, nullptr);
  const std::string dir = tu::make_temp_dir("ckpt_bad");
  const std::string path = dir + "/model.bin";
  save_checkpoint(path, checkpoint_from_session(result.session));
  const auto bytes = tu::read_bytes(path);

  SUBCASE("truncated file") {
    auto cut = bytes;
    cut.resize(cut.size() / 2);
    tu::write_bytes(dir + "/cut.bin", cut);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir + "/cut.bin"), doctest::Contains("truncated"),
                         FormatError);
  }
  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    tu::write_bytes(dir + "/magic.bin", bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir + "/magic.bin"), doctest::Contains("magic"),
                         FormatError);
  }
  SUBCASE("version mismatch is called out explicitly") {
    auto bad = bytes;
    bad[8] = 2;  // little-endian version field
    tu::write_bytes(dir + "/version.bin", bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir + "/version.bin"),
                         doctest::Contains("version 2"), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto bad = bytes;
    bad.push_back(0);
    tu::write_bytes(dir + "/trail.bin", bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir + "/trail.bin"), doctest::Contains("trailing"),
                         FormatError);
  }
}

TEST_CASE("resume from epoch k matches the uninterrupted run at k+1") {
  const Dataset ds = tu::make_synth_dataset(256, 9);
  const TrainingConfig cfg2 = small_config(2, 256);

  const TrainResult straight = train(cfg2, ds, &ds);

  TrainingConfig cfg1 = cfg2;
  cfg1.epochs = 1;
  TrainResult first = train(cfg1, ds, &ds);
  const std::string dir = tu::make_temp_dir("resume");
  save_checkpoint(dir + "/k1.bin", checkpoint_from_session(first.session));

  TrainerSession resumed = session_from_checkpoint(load_checkpoint(dir + "/k1.bin"));
  const auto more = run_training(resumed, cfg2, ds, &ds);
  REQUIRE(more.size() == 1);
  CHECK(more[0].epoch == 2);
  CHECK(more[0].train_loss == straight.metrics[1].train_loss);
  CHECK(more[0].train_acc == straight.metrics[1].train_acc);
  CHECK(more[0].val_loss == straight.metrics[1].val_loss);

  const auto& pa = resumed.net.params();
  const auto& pb = straight.session.net.params();
  for (std::size_t l = 0; l < pa.size(); ++l) {
    for (std::size_t i = 0; i < pa[l].weights.size(); ++i) {
      REQUIRE(pa[l].weights[i] == pb[l].weights[i]);
    }
  }
}

TEST_CASE("metrics CSV has header plus one row per epoch and re-parses") {
  std::vector<EpochMetrics> metrics;
  SeededRng rng(10);
  for (int e = 1; e <= 50; ++e) {
    EpochMetrics m;
    m.epoch = e;
    m.train_loss = rng.uniform();
    m.train_acc = rng.uniform();
    m.val_loss = rng.uniform();
    m.val_acc = rng.uniform();
    m.wall_seconds = rng.uniform();
    metrics.push_back(m);
  }
  const std::string dir = tu::make_temp_dir("csv");
  const std::string path = dir + "/metrics.csv";
  export_metrics_csv(metrics, path, /*zero_wall=*/false);

  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 51);

  const auto parsed = parse_metrics_csv(path);
  REQUIRE(parsed.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(parsed[i].epoch == metrics[i].epoch);
    // %.9g keeps nine significant digits
    CHECK(parsed[i].train_loss == doctest::Approx(metrics[i].train_loss).epsilon(1e-8));
    CHECK(parsed[i].val_acc == doctest::Approx(metrics[i].val_acc).epsilon(1e-8));
  }

  export_metrics_csv(metrics, path, /*zero_wall=*/true);
  for (const auto& m : parse_metrics_csv(path)) CHECK(m.wall_seconds == 0.0);

  CHECK_THROWS_AS(export_metrics_csv({}, path, false), DomainError);
}

TEST_CASE("plot files are valid PGMs sized to the canvas") {
  std::vector<EpochMetrics> metrics;
  for (int e = 1; e <= 5; ++e) {
    metrics.push_back({e, 2.0 / e, 0.5 + 0.08 * e, 2.2 / e, 0.45 + 0.08 * e, 1.0});
  }
  const std::string dir = tu::make_temp_dir("plots");
  plot_metrics(metrics, dir);
  const GrayImage loss = read_pgm(dir + "/loss.pgm");
  const GrayImage acc = read_pgm(dir + "/accuracy.pgm");
  CHECK(loss.width == 640);
  CHECK(loss.height == 400);
  CHECK(acc.width == 640);
  // both shades must appear (two polylines drawn)
  bool has_train = false, has_val = false;
  for (std::uint8_t p : loss.pixels) {
    has_train |= p == 0;
    has_val |= p == 150;
  }
  CHECK(has_train);
  CHECK(has_val);
}

TEST_CASE("untrained network scores near chance on balanced labels") {
  const Dataset ds = tu::make_synth_dataset(2000, 12);
  SeededRng rng(derive_seed(99, "init"));
  Network net = Network::build(default_architecture(4, 4), rng);
  const auto [loss, acc] = evaluate(net, ds);
  CHECK(acc >= 0.05);
  CHECK(acc <= 0.20);
  CHECK(loss > 1.5);  // near ln(10)
}

TEST_CASE("train accuracy improves on the fixture-scale problem") {
  const Dataset ds = tu::make_synth_dataset(512, 13);
  TrainingConfig cfg = small_config(3, 512);
  cfg.batch_size = 32;
  const TrainResult result = train(cfg, ds, nullptr);
  CHECK(result.metrics.back().train_acc > result.metrics.front().train_acc);
}
