#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "digitnet/autoencoder.hpp"
#include "support/testutil.hpp"

using namespace digitnet;
namespace tu = digitnet::testutil;

TEST_CASE("untrained AE keeps outputs strictly inside (0,1)") {
  const AeModel model = ae_build(32, 1);
  SeededRng rng(2);
  Tensor x({784});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  const Tensor recon = ae_forward(model, x);
  REQUIRE(recon.shape() == std::vector<std::size_t>{784});
  for (std::size_t i = 0; i < recon.size(); ++i) {
    REQUIRE(recon[i] > 0.0);
    REQUIRE(recon[i] < 1.0);
  }
}

TEST_CASE("AE encoder output width equals the latent size") {
  const AeModel model = ae_build(32, 3);
  SeededRng rng(4);
  Tensor batch({5, 784});
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = rng.uniform();
  const Tensor z = ae_encode(model, batch);
  CHECK(z.shape() == std::vector<std::size_t>{5, 32});
  CHECK(model.latent == 32);
}

TEST_CASE("AE epoch-mean mse decreases from epoch 1 to epoch 5") {
  const Dataset ds = tu::make_synth_dataset(1000, 5);
  AeConfig cfg;
  cfg.latent = 32;
  cfg.epochs = 5;
  cfg.batch_size = 64;
  cfg.seed = 6;
  const AeResult result = ae_train(cfg, ds);
  REQUIRE(result.curve.size() == 5);
  CHECK(result.curve[4].mse < result.curve[0].mse);
  for (const AePoint& p : result.curve) CHECK(p.mse >= 0.0);
}

TEST_CASE("AE training is deterministic per seed") {
  const Dataset ds = tu::make_synth_dataset(200, 7);
  AeConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 50;
  cfg.seed = 8;
  const AeResult a = ae_train(cfg, ds);
  const AeResult b = ae_train(cfg, ds);
  for (std::size_t i = 0; i < a.curve.size(); ++i) REQUIRE(a.curve[i].mse == b.curve[i].mse);
}

TEST_CASE("AE grid pairs originals above reconstructions with separators") {
  const Dataset ds = tu::make_synth_dataset(16, 9);
  const AeModel model = ae_build(16, 10);
  const GrayImage grid = ae_reconstruction_grid(model, ds, 8);
  CHECK(grid.height == 2 * 28 + 1);
  CHECK(grid.width == 8 * 28 + 7);
  CHECK_THROWS_AS(ae_reconstruction_grid(model, ds, 0), ConfigError);
  CHECK_THROWS_AS(ae_reconstruction_grid(model, ds, 17), ConfigError);
}

TEST_CASE("KL divergence fixed values") {
  CHECK(kl_divergence(Tensor({1}, {0.0}), Tensor({1}, {0.0})) == 0.0);
  CHECK(kl_divergence(Tensor({1}, {1.0}), Tensor({1}, {0.0})) == doctest::Approx(0.5));
  const double lv = std::log(4.0);
  CHECK(kl_divergence(Tensor({1}, {0.0}), Tensor({1}, {lv})) ==
        doctest::Approx(1.5 - std::log(2.0)).epsilon(1e-9));
  CHECK(kl_divergence(Tensor({1}, {0.0}), Tensor({1}, {lv})) ==
        doctest::Approx(0.80685).epsilon(1e-4));
  CHECK_THROWS_AS(kl_divergence(Tensor({2}), Tensor({3})), ShapeError);
}

TEST_CASE("KL divergence is non-negative over 1e4 random draws") {
  SeededRng rng(11);
  for (int iter = 0; iter < 10000; ++iter) {
    Tensor mu({4}), lv({4});
    for (std::size_t i = 0; i < 4; ++i) {
      mu[i] = 4.0 * rng.normal();
      lv[i] = 3.0 * rng.normal();
    }
    REQUIRE(kl_divergence(mu, lv) >= 0.0);
  }
}

TEST_CASE("reparameterization: zero noise returns the mean") {
  const VaeModel model(3, 5, 12, 8);
  SeededRng rng(13);
  Tensor x({8});
  for (std::size_t i = 0; i < 8; ++i) x[i] = rng.uniform();
  const auto [z, mu, logvar] = model.encode(x, nullptr);
  REQUIRE(z.shape() == std::vector<std::size_t>{3});
  for (std::size_t i = 0; i < 3; ++i) REQUIRE(z[i] == mu[i]);
}

TEST_CASE("reparameterization: unit noise at logvar zero shifts by one") {
  // drive the forward pass with explicit eps = 1 and logvar forced to 0
  VaeModel model(2, 4, 14, 6);
  // zero the logvar head so logvar == 0 everywhere
  auto params = model.param_tensors();
  // order: enc1 w,b, mu w,b, logvar w,b, dec1 w,b, dec2 w,b
  Tensor& lv_w = *params[4];
  Tensor& lv_b = *params[5];
  for (std::size_t i = 0; i < lv_w.size(); ++i) lv_w[i] = 0.0;
  for (std::size_t i = 0; i < lv_b.size(); ++i) lv_b[i] = 0.0;

  SeededRng rng(15);
  Tensor x({6});
  for (std::size_t i = 0; i < 6; ++i) x[i] = rng.uniform();
  Tensor eps({1, 2}, {1.0, 1.0});
  const VaeModel::Activations acts = model.forward(x.reshaped({1, 6}), eps);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(acts.logvar[i] == 0.0);
    REQUIRE(acts.z[i] == doctest::Approx(acts.mu[i] + 1.0).epsilon(1e-15));
  }
}

TEST_CASE("sampled latents average to the mean within one percent") {
  const VaeModel model(2, 4, 16, 6);
  SeededRng data_rng(17);
  Tensor x({6});
  for (std::size_t i = 0; i < 6; ++i) x[i] = data_rng.uniform();
  const auto [z0, mu, logvar] = model.encode(x, nullptr);

  SeededRng rng(18);
  const int draws = 200000;
  std::vector<double> mean(2, 0.0);
  for (int d = 0; d < draws; ++d) {
    const auto [z, m2, lv2] = model.encode(x, &rng);
    for (std::size_t i = 0; i < 2; ++i) mean[i] += z[i];
  }
  for (std::size_t i = 0; i < 2; ++i) {
    mean[i] /= draws;
    REQUIRE(std::fabs(mean[i] - mu[i]) < 0.01 * std::max(1.0, std::fabs(mu[i])));
  }
}

TEST_CASE("VAE loss fixed values") {
  Tensor half({784});
  for (std::size_t i = 0; i < 784; ++i) half[i] = 0.5;
  const VaeLossParts parts = vae_loss(half, half, Tensor({2}), Tensor({2}));
  CHECK(parts.recon == doctest::Approx(784.0 * std::log(2.0)).epsilon(1e-9));
  CHECK(parts.recon == doctest::Approx(543.43).epsilon(1e-4));
  CHECK(parts.kl == 0.0);
  CHECK(parts.total == parts.recon);
}

TEST_CASE("VAE gradient entries of the suite stay under 1e-4") {
  for (const auto& entry : tu::gradient_suite(20)) {
    if (entry.name.rfind("vae", 0) == 0) {
      INFO(entry.name, " max_rel_err=", entry.max_rel_err);
      CHECK(entry.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("VAE epoch-mean total loss decreases from epoch 1 to epoch 5") {
  const Dataset ds = tu::make_synth_dataset(1000, 19);
  VaeConfig cfg;
  cfg.latent = 8;
  cfg.hidden = 64;
  cfg.epochs = 5;
  cfg.batch_size = 100;
  cfg.seed = 20;
  const VaeResult result = vae_train(cfg, ds);
  REQUIRE(result.curve.size() == 5);
  CHECK(result.curve[4].total < result.curve[0].total);
  for (const VaePoint& p : result.curve) {
    CHECK(p.kl >= 0.0);
    CHECK(p.total == doctest::Approx(p.recon + p.kl));
  }
}

TEST_CASE("VAE samples stay in (0,1) and grids are deterministic per seed") {
  const VaeModel model(4, 16, 21, 784);
  SeededRng rng(22);
  const Tensor samples = vae_sample(model, 3, rng);
  REQUIRE(samples.shape() == std::vector<std::size_t>{3, 784});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    REQUIRE(samples[i] > 0.0);
    REQUIRE(samples[i] < 1.0);
  }

  SeededRng g1(23), g2(23);
  const GrayImage a = vae_sample_grid(model, 2, 3, g1);
  const GrayImage b = vae_sample_grid(model, 2, 3, g2);
  CHECK(a.width == 3 * 28 + 2);
  CHECK(a.height == 2 * 28 + 1);
  REQUIRE(a.pixels == b.pixels);

  SeededRng g3(24);
  const GrayImage c = vae_sample_grid(model, 2, 3, g3);
  CHECK(c.pixels != a.pixels);
}

TEST_CASE("mse reconstruction flag changes the objective") {
  SeededRng rng(25);
  Tensor r({4}, {0.2, 0.8, 0.4, 0.6});
  Tensor t({4}, {0.0, 1.0, 0.5, 0.5});
  const VaeLossParts bce = vae_loss(r, t, Tensor({1}), Tensor({1}), false);
  const VaeLossParts sse = vae_loss(r, t, Tensor({1}), Tensor({1}), true);
  CHECK(bce.recon != sse.recon);
  const double expected_sse = 0.04 + 0.04 + 0.01 + 0.01;
  CHECK(sse.recon == doctest::Approx(expected_sse));
}

TEST_CASE("VAE training is deterministic per seed") {
  const Dataset ds = tu::make_synth_dataset(200, 26);
  VaeConfig cfg;
  cfg.latent = 4;
  cfg.hidden = 16;
  cfg.epochs = 2;
  cfg.batch_size = 50;
  cfg.seed = 27;
  const VaeResult a = vae_train(cfg, ds);
  const VaeResult b = vae_train(cfg, ds);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    REQUIRE(a.curve[i].total == b.curve[i].total);
  }
}
