#ifndef DIGITNET_AUTOENCODER_HPP
#define DIGITNET_AUTOENCODER_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "digitnet/image.hpp"
#include "digitnet/layers.hpp"
#include "digitnet/loss.hpp"
#include "digitnet/mnist.hpp"

namespace digitnet {

// ---- plain autoencoder --------------------------------------------------

struct AeConfig {
  std::size_t latent = 32;
  int epochs = 5;
  std::size_t batch_size = 128;
  // mean-pixel squared error shrinks gradients by 1/784, so the default
  // step is larger than the classifier's
  SgdConfig sgd{0.1, 1e-6, 0.9, true};
  std::uint64_t seed = 42;
  std::optional<std::size_t> limit_train;
};

/// dense 784 -> latent -> relu -> dense latent -> 784 -> sigmoid.
struct AeModel {
  Network net;
  std::size_t latent = 32;
};

AeModel ae_build(std::size_t latent, std::uint64_t seed, std::size_t input_width = 784);

/// Batch [B,784] (or [784]) in [0,1] to reconstructions in (0,1).
Tensor ae_forward(const AeModel& model, const Tensor& images);

/// Encoder half only; output width == latent.
Tensor ae_encode(const AeModel& model, const Tensor& images);

struct AePoint {
  int epoch = 0;
  double mse = 0.0;
};

struct AeResult {
  AeModel model;
  std::vector<AePoint> curve;
};

using AeCallback = std::function<void(const AePoint&)>;
AeResult ae_train(const AeConfig& cfg, const Dataset& ds, const AeCallback& cb = {});

/// CSV schema: epoch,mse.
void ae_write_curve_csv(const std::vector<AePoint>& curve, const std::string& path);

/// Originals above reconstructions, `pairs` columns of 28x28 tiles.
GrayImage ae_reconstruction_grid(const AeModel& model, const Dataset& ds, std::size_t pairs);

// ---- variational autoencoder ---------------------------------------------

struct VaeConfig {
  std::size_t latent = 20;
  std::size_t hidden = 400;
  bool mse_recon = false;  // default: Bernoulli cross-entropy summed over pixels
  int epochs = 5;
  std::size_t batch_size = 128;
  SgdConfig sgd;
  std::uint64_t seed = 42;
  std::optional<std::size_t> limit_train;
};

struct VaeLossParts {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

/// 784 -> hidden -> (mu, logvar); z -> hidden -> 784 with sigmoid output.
class VaeModel {
public:
  VaeModel() = default;
  VaeModel(std::size_t latent, std::size_t hidden, std::uint64_t seed,
           std::size_t input_width = 784);

  std::size_t latent() const { return latent_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t input_width() const { return input_width_; }

  struct Activations {
    Tensor enc_pre, enc_hidden;  // pre/post ReLU
    Tensor mu, logvar, z;
    Tensor dec_pre, dec_hidden;
    Tensor recon;
  };

  /// Full pass with explicit noise; eps shape matches [B,latent] (or
  /// [latent] for a single sample).
  Activations forward(const Tensor& x, const Tensor& eps) const;

  /// z = mu + exp(logvar/2) * eps with eps drawn per element from rng;
  /// rng == nullptr forces eps = 0.
  std::tuple<Tensor, Tensor, Tensor> encode(const Tensor& x, SeededRng* rng) const;

  Tensor decode(const Tensor& z) const;

  /// Gradients of the batch-mean ELBO loss; accumulated into grads().
  void backward(const Activations& acts, const Tensor& x, const Tensor& eps, bool mse_recon);

  std::vector<Tensor*> param_tensors();
  std::vector<Tensor*> grad_tensors();
  void zero_grads();

private:
  std::size_t latent_ = 20, hidden_ = 400, input_width_ = 784;
  // enc1, mu, logvar, dec1, dec2
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  std::vector<Tensor> grad_weights_;
  std::vector<Tensor> grad_biases_;
};

/// -1/2 sum_i (1 + logvar_i - mu_i^2 - exp(logvar_i)).
/// Rank-1: one sample. Rank-2 [B,d]: mean over rows.
double kl_divergence(const Tensor& mu, const Tensor& logvar);

/// recon: Bernoulli cross-entropy summed over pixels (or summed squared
/// error with mse_recon); totals are per-sample, batch inputs average.
VaeLossParts vae_loss(const Tensor& recon, const Tensor& target, const Tensor& mu,
                      const Tensor& logvar, bool mse_recon = false);

struct VaePoint {
  int epoch = 0;
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct VaeResult {
  VaeModel model;
  std::vector<VaePoint> curve;
};

using VaeCallback = std::function<void(const VaePoint&)>;
VaeResult vae_train(const VaeConfig& cfg, const Dataset& ds, const VaeCallback& cb = {});

/// CSV schema: epoch,recon,kl,total.
void vae_write_curve_csv(const std::vector<VaePoint>& curve, const std::string& path);

/// Decodes count draws from the standard-normal prior; rows of 784.
Tensor vae_sample(const VaeModel& model, std::size_t count, SeededRng& rng);

/// rows x cols grid of prior samples as 28x28 tiles.
GrayImage vae_sample_grid(const VaeModel& model, std::size_t rows, std::size_t cols,
                          SeededRng& rng);

}  // namespace digitnet

#endif
