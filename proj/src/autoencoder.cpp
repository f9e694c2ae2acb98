#include "digitnet/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "digitnet/trainer.hpp"

namespace digitnet {

AeModel ae_build(std::size_t latent, std::uint64_t seed, std::size_t input_width) {
  if (latent == 0) throw ConfigError("latent width must be positive");
  std::vector<LayerSpec> specs{
      LayerSpec::Dense(input_width, latent),
      LayerSpec::Relu(),
      LayerSpec::Dense(latent, input_width),
      LayerSpec::Sigmoid(),
  };
  SeededRng rng(derive_seed(seed, "ae-init"));
  AeModel model;
  model.net = Network::build(std::move(specs), rng);
  model.latent = latent;
  return model;
}

Tensor ae_forward(const AeModel& model, const Tensor& images) {
  return model.net.infer(images);
}

Tensor ae_encode(const AeModel& model, const Tensor& images) {
  const Tensor pre = dense_forward(images, model.net.params()[0].weights, model.net.params()[0].bias);
  return relu_forward(pre);
}

namespace {

Tensor flat_images(const Dataset& ds, std::size_t begin, std::size_t count) {
  const std::size_t px = ds.images.dim(1) * ds.images.dim(2);
  std::vector<double> vals(ds.images.data() + begin * px, ds.images.data() + (begin + count) * px);
  return Tensor({count, px}, std::move(vals));
}

}  // namespace

AeResult ae_train(const AeConfig& cfg, const Dataset& ds, const AeCallback& cb) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  validate(cfg.sgd);
  const std::size_t total = ds.count();
  if (cfg.limit_train && (*cfg.limit_train == 0 || *cfg.limit_train > total)) {
    throw ConfigError("limit_train outside dataset size");
  }
  const std::size_t n = cfg.limit_train ? *cfg.limit_train : total;
  const std::size_t px = ds.images.dim(1) * ds.images.dim(2);

  AeResult result;
  result.model = ae_build(cfg.latent, cfg.seed, px);
  Network& net = result.model.net;
  net.set_mode(Mode::train);
  const auto params = net.param_tensors();
  const auto grads = net.grad_tensors();
  OptimizerState opt = OptimizerState::for_params(params);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    SeededRng shuffle_rng(derive_seed(cfg.seed, "ae-shuffle", static_cast<std::uint64_t>(epoch)));
    const BatchPlan plan = BatchPlan::make(n, cfg.batch_size, shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < plan.batch_count(); ++bi) {
      const std::size_t begin = bi * plan.batch_size;
      const std::size_t end = std::min(begin + plan.batch_size, n);
      const std::size_t b = end - begin;
      Tensor x({b, px});
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = plan.order[begin + i];
        std::copy(ds.images.data() + src * px, ds.images.data() + (src + 1) * px,
                  x.data() + i * px);
      }
      ForwardCache cache;
      const Tensor recon = net.forward(x, &cache);
      const double batch_mse = mse(recon, x);
      loss_sum += batch_mse * static_cast<double>(b);
      // d(mean over samples of per-sample mean-pixel SE)/d(recon)
      Tensor grad = scale(sub(recon, x), 2.0 / static_cast<double>(recon.size()));
      net.backward(cache, std::move(grad));
      sgd_step(params, grads, opt, cfg.sgd);
    }
    const AePoint point{epoch, loss_sum / static_cast<double>(n)};
    result.curve.push_back(point);
    if (cb) cb(point);
  }
  net.set_mode(Mode::eval);
  return result;
}

void ae_write_curve_csv(const std::vector<AePoint>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "epoch,mse\n";
  for (const AePoint& p : curve) out << p.epoch << ',' << format_g9(p.mse) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

GrayImage ae_reconstruction_grid(const AeModel& model, const Dataset& ds, std::size_t pairs) {
  if (pairs == 0) throw ConfigError("grid needs at least one pair");
  if (pairs > ds.count()) throw ConfigError("not enough images for the grid");
  const std::size_t H = ds.images.dim(1), W = ds.images.dim(2);
  const Tensor originals = flat_images(ds, 0, pairs);
  const Tensor recon = ae_forward(model, originals);
  std::vector<Tensor> tiles;
  for (std::size_t i = 0; i < pairs; ++i) {
    tiles.push_back(Tensor({H, W}, std::vector<double>(originals.data() + i * H * W,
                                                       originals.data() + (i + 1) * H * W)));
  }
  for (std::size_t i = 0; i < pairs; ++i) {
    tiles.push_back(Tensor({H, W}, std::vector<double>(recon.data() + i * H * W,
                                                       recon.data() + (i + 1) * H * W)));
  }
  return tensor_to_gray(tile_grid(tiles, 2, pairs, 1.0));
}

// ---- VAE ------------------------------------------------------------------

VaeModel::VaeModel(std::size_t latent, std::size_t hidden, std::uint64_t seed,
                   std::size_t input_width)
    : latent_(latent), hidden_(hidden), input_width_(input_width) {
  if (latent == 0 || hidden == 0) throw ConfigError("latent and hidden widths must be positive");
  SeededRng rng(derive_seed(seed, "vae-init"));
  const auto init = [&rng](std::size_t out, std::size_t in, double gain) {
    Tensor w({out, in});
    const double std_dev = std::sqrt(gain / static_cast<double>(in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std_dev * rng.normal();
    return w;
  };
  // enc1 and dec1 feed ReLU; the heads and the output layer do not.
  weights_.push_back(init(hidden_, input_width_, 2.0));
  weights_.push_back(init(latent_, hidden_, 1.0));
  weights_.push_back(init(latent_, hidden_, 1.0));
  weights_.push_back(init(hidden_, latent_, 2.0));
  weights_.push_back(init(input_width_, hidden_, 1.0));
  biases_ = {Tensor({hidden_}), Tensor({latent_}), Tensor({latent_}), Tensor({hidden_}),
             Tensor({input_width_})};
  for (const Tensor& w : weights_) grad_weights_.emplace_back(w.shape());
  for (const Tensor& b : biases_) grad_biases_.emplace_back(b.shape());
}

namespace {

Tensor ensure_rows(const Tensor& t, std::size_t width, const char* what) {
  if (t.rank() == 1) {
    if (t.dim(0) != width) {
      throw ShapeError(std::string(what) + ": expected width " + std::to_string(width) + ", got " +
                       t.shape_str());
    }
    return t.reshaped({1, t.dim(0)});
  }
  if (t.rank() != 2 || t.dim(1) != width) {
    throw ShapeError(std::string(what) + ": expected [B," + std::to_string(width) + "], got " +
                     t.shape_str());
  }
  return t;
}

}  // namespace

VaeModel::Activations VaeModel::forward(const Tensor& x, const Tensor& eps) const {
  const Tensor xb = ensure_rows(x, input_width_, "vae input");
  const Tensor eb = ensure_rows(eps, latent_, "vae noise");
  if (eb.dim(0) != xb.dim(0)) throw ShapeError("vae: noise batch does not match input batch");

  Activations a;
  a.enc_pre = dense_forward(xb, weights_[0], biases_[0]);
  a.enc_hidden = relu_forward(a.enc_pre);
  a.mu = dense_forward(a.enc_hidden, weights_[1], biases_[1]);
  a.logvar = dense_forward(a.enc_hidden, weights_[2], biases_[2]);
  a.z = Tensor(a.mu.shape());
  for (std::size_t i = 0; i < a.z.size(); ++i) {
    a.z[i] = a.mu[i] + std::exp(0.5 * a.logvar[i]) * eb[i];
  }
  a.dec_pre = dense_forward(a.z, weights_[3], biases_[3]);
  a.dec_hidden = relu_forward(a.dec_pre);
  a.recon = sigmoid_forward(dense_forward(a.dec_hidden, weights_[4], biases_[4]));
  return a;
}

std::tuple<Tensor, Tensor, Tensor> VaeModel::encode(const Tensor& x, SeededRng* rng) const {
  const Tensor xb = ensure_rows(x, input_width_, "vae input");
  const Tensor h = relu_forward(dense_forward(xb, weights_[0], biases_[0]));
  Tensor mu = dense_forward(h, weights_[1], biases_[1]);
  Tensor logvar = dense_forward(h, weights_[2], biases_[2]);
  Tensor z(mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double eps = rng ? rng->normal() : 0.0;
    z[i] = mu[i] + std::exp(0.5 * logvar[i]) * eps;
  }
  if (x.rank() == 1) {
    return {std::move(z).reshaped({latent_}), std::move(mu).reshaped({latent_}),
            std::move(logvar).reshaped({latent_})};
  }
  return {std::move(z), std::move(mu), std::move(logvar)};
}

Tensor VaeModel::decode(const Tensor& z) const {
  const Tensor zb = ensure_rows(z, latent_, "vae latent");
  const Tensor h = relu_forward(dense_forward(zb, weights_[3], biases_[3]));
  Tensor r = sigmoid_forward(dense_forward(h, weights_[4], biases_[4]));
  if (z.rank() == 1) return std::move(r).reshaped({input_width_});
  return r;
}

void VaeModel::backward(const Activations& a, const Tensor& x, const Tensor& eps, bool mse_recon) {
  const Tensor xb = ensure_rows(x, input_width_, "vae input");
  const Tensor eb = ensure_rows(eps, latent_, "vae noise");
  const std::size_t B = xb.dim(0);
  const double inv_b = 1.0 / static_cast<double>(B);

  // d recon / d decoder logits; cross-entropy fuses with sigmoid.
  Tensor d_dec_logits(a.recon.shape());
  if (mse_recon) {
    for (std::size_t i = 0; i < a.recon.size(); ++i) {
      const double dr = 2.0 * (a.recon[i] - xb[i]) * inv_b;
      d_dec_logits[i] = dr * a.recon[i] * (1.0 - a.recon[i]);
    }
  } else {
    for (std::size_t i = 0; i < a.recon.size(); ++i) {
      d_dec_logits[i] = (a.recon[i] - xb[i]) * inv_b;
    }
  }

  Tensor d_dec_hidden, gw4, gb4;
  dense_backward(a.dec_hidden, weights_[4], d_dec_logits, d_dec_hidden, gw4, gb4);
  const Tensor d_dec_pre = relu_backward(a.dec_pre, d_dec_hidden);
  Tensor dz, gw3, gb3;
  dense_backward(a.z, weights_[3], d_dec_pre, dz, gw3, gb3);

  // KL terms: d/dmu = mu/B, d/dlogvar = (exp(logvar)-1)/(2B).
  Tensor d_mu(a.mu.shape());
  Tensor d_logvar(a.logvar.shape());
  for (std::size_t i = 0; i < a.mu.size(); ++i) {
    const double sigma_eps = 0.5 * std::exp(0.5 * a.logvar[i]) * eb[i];
    d_mu[i] = dz[i] + a.mu[i] * inv_b;
    d_logvar[i] = dz[i] * sigma_eps + (std::exp(a.logvar[i]) - 1.0) * 0.5 * inv_b;
  }

  Tensor d_h_mu, gw1, gb1;
  dense_backward(a.enc_hidden, weights_[1], d_mu, d_h_mu, gw1, gb1);
  Tensor d_h_lv, gw2, gb2;
  dense_backward(a.enc_hidden, weights_[2], d_logvar, d_h_lv, gw2, gb2);
  const Tensor d_enc_hidden = add(d_h_mu, d_h_lv);
  const Tensor d_enc_pre = relu_backward(a.enc_pre, d_enc_hidden);
  Tensor d_x, gw0, gb0;
  dense_backward(xb, weights_[0], d_enc_pre, d_x, gw0, gb0);

  Tensor* gws[5] = {&gw0, &gw1, &gw2, &gw3, &gw4};
  Tensor* gbs[5] = {&gb0, &gb1, &gb2, &gb3, &gb4};
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t i = 0; i < grad_weights_[k].size(); ++i) grad_weights_[k][i] += (*gws[k])[i];
    for (std::size_t i = 0; i < grad_biases_[k].size(); ++i) grad_biases_[k][i] += (*gbs[k])[i];
  }
}

std::vector<Tensor*> VaeModel::param_tensors() {
  std::vector<Tensor*> out;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back(&weights_[k]);
    out.push_back(&biases_[k]);
  }
  return out;
}

std::vector<Tensor*> VaeModel::grad_tensors() {
  std::vector<Tensor*> out;
  for (std::size_t k = 0; k < grad_weights_.size(); ++k) {
    out.push_back(&grad_weights_[k]);
    out.push_back(&grad_biases_[k]);
  }
  return out;
}

void VaeModel::zero_grads() {
  for (Tensor& g : grad_weights_)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.0;
  for (Tensor& g : grad_biases_)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.0;
}

double kl_divergence(const Tensor& mu, const Tensor& logvar) {
  if (!mu.same_shape(logvar)) {
    throw ShapeError("kl_divergence: shape mismatch " + mu.shape_str() + " vs " +
                     logvar.shape_str());
  }
  if (mu.size() == 0) throw DomainError("kl_divergence of empty tensors is undefined");
  const std::size_t rows = mu.rank() == 2 ? mu.dim(0) : 1;
  double total = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    total += 1.0 + logvar[i] - mu[i] * mu[i] - std::exp(logvar[i]);
  }
  return -0.5 * total / static_cast<double>(rows);
}

VaeLossParts vae_loss(const Tensor& recon, const Tensor& target, const Tensor& mu,
                      const Tensor& logvar, bool mse_recon) {
  if (!recon.same_shape(target)) {
    throw ShapeError("vae_loss: recon/target shapes differ: " + recon.shape_str() + " vs " +
                     target.shape_str());
  }
  const std::size_t rows = recon.rank() == 2 ? recon.dim(0) : 1;
  double recon_sum = 0.0;
  if (mse_recon) {
    for (std::size_t i = 0; i < recon.size(); ++i) {
      const double d = recon[i] - target[i];
      recon_sum += d * d;
    }
  } else {
    for (std::size_t i = 0; i < recon.size(); ++i) {
      const double r = std::clamp(recon[i], kLogClipEpsilon, 1.0 - kLogClipEpsilon);
      recon_sum -= target[i] * std::log(r) + (1.0 - target[i]) * std::log(1.0 - r);
    }
  }
  VaeLossParts parts;
  parts.recon = recon_sum / static_cast<double>(rows);
  parts.kl = kl_divergence(mu, logvar);
  parts.total = parts.recon + parts.kl;
  return parts;
}

VaeResult vae_train(const VaeConfig& cfg, const Dataset& ds, const VaeCallback& cb) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  validate(cfg.sgd);
  const std::size_t total = ds.count();
  if (cfg.limit_train && (*cfg.limit_train == 0 || *cfg.limit_train > total)) {
    throw ConfigError("limit_train outside dataset size");
  }
  const std::size_t n = cfg.limit_train ? *cfg.limit_train : total;
  const std::size_t px = ds.images.dim(1) * ds.images.dim(2);

  VaeResult result;
  result.model = VaeModel(cfg.latent, cfg.hidden, cfg.seed, px);
  VaeModel& model = result.model;
  const auto params = model.param_tensors();
  const auto grads = model.grad_tensors();
  OptimizerState opt = OptimizerState::for_params(params);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    SeededRng shuffle_rng(derive_seed(cfg.seed, "vae-shuffle", static_cast<std::uint64_t>(epoch)));
    SeededRng noise_rng(derive_seed(cfg.seed, "vae-noise", static_cast<std::uint64_t>(epoch)));
    const BatchPlan plan = BatchPlan::make(n, cfg.batch_size, shuffle_rng);
    double recon_sum = 0.0, kl_sum = 0.0;
    for (std::size_t bi = 0; bi < plan.batch_count(); ++bi) {
      const std::size_t begin = bi * plan.batch_size;
      const std::size_t end = std::min(begin + plan.batch_size, n);
      const std::size_t b = end - begin;
      Tensor x({b, px});
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = plan.order[begin + i];
        std::copy(ds.images.data() + src * px, ds.images.data() + (src + 1) * px,
                  x.data() + i * px);
      }
      Tensor eps({b, cfg.latent});
      for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = noise_rng.normal();

      const VaeModel::Activations acts = model.forward(x, eps);
      const VaeLossParts parts = vae_loss(acts.recon, x, acts.mu, acts.logvar, cfg.mse_recon);
      recon_sum += parts.recon * static_cast<double>(b);
      kl_sum += parts.kl * static_cast<double>(b);

      model.zero_grads();
      model.backward(acts, x, eps, cfg.mse_recon);
      sgd_step(params, grads, opt, cfg.sgd);
    }
    VaePoint point;
    point.epoch = epoch;
    point.recon = recon_sum / static_cast<double>(n);
    point.kl = kl_sum / static_cast<double>(n);
    point.total = point.recon + point.kl;
    result.curve.push_back(point);
    if (cb) cb(point);
  }
  return result;
}

void vae_write_curve_csv(const std::vector<VaePoint>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "epoch,recon,kl,total\n";
  for (const VaePoint& p : curve) {
    out << p.epoch << ',' << format_g9(p.recon) << ',' << format_g9(p.kl) << ','
        << format_g9(p.total) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Tensor vae_sample(const VaeModel& model, std::size_t count, SeededRng& rng) {
  if (count == 0) throw ConfigError("sample count must be positive");
  Tensor z({count, model.latent()});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return model.decode(z);
}

GrayImage vae_sample_grid(const VaeModel& model, std::size_t rows, std::size_t cols,
                          SeededRng& rng) {
  if (rows == 0 || cols == 0) throw ConfigError("grid dimensions must be positive");
  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(double(model.input_width()))));
  if (side * side != model.input_width()) {
    throw DomainError("sample grid needs square images");
  }
  const Tensor samples = vae_sample(model, rows * cols, rng);
  std::vector<Tensor> tiles;
  for (std::size_t i = 0; i < rows * cols; ++i) {
    tiles.push_back(Tensor({side, side},
                           std::vector<double>(samples.data() + i * side * side,
                                               samples.data() + (i + 1) * side * side)));
  }
  return tensor_to_gray(tile_grid(tiles, rows, cols, 1.0));
}

}  // namespace digitnet
