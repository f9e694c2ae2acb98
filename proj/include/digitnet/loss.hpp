#ifndef DIGITNET_LOSS_HPP
#define DIGITNET_LOSS_HPP

#include <cstdint>
#include <vector>

#include "digitnet/tensor.hpp"

namespace digitnet {

struct SgdConfig {
  double lr0 = 0.001;
  double decay = 1e-6;
  double momentum = 0.9;
  bool nesterov = true;
};

void validate(const SgdConfig& cfg);

/// Per-parameter velocity plus the shared update counter.
struct OptimizerState {
  std::vector<Tensor> velocity;
  std::uint64_t iteration = 0;

  static OptimizerState for_params(const std::vector<Tensor*>& params);
};

/// -sum target_i * ln(probs_i) with probs clipped to [1e-12, 1-1e-12].
/// Rank-1: one sample. Rank-2 [B,n]: mean over rows.
double categorical_crossentropy(const Tensor& probs, const Tensor& target);

/// Gradient of CE(softmax(logits), target) w.r.t. logits: softmax - target.
Tensor softmax_ce_grad(const Tensor& logits, const Tensor& target);

/// Mean of squared differences over all elements.
double mse(const Tensor& a, const Tensor& b);

/// lr0 / (1 + decay * t), t = completed update count.
double effective_lr(const SgdConfig& cfg, std::uint64_t t);

/// One momentum/Nesterov update over all parameters:
///   v <- mu*v - eta*g;  w <- w + (nesterov ? mu*v - eta*g : v)
/// The iteration counter advances once per call.
void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
              OptimizerState& state, const SgdConfig& cfg);

inline constexpr double kLogClipEpsilon = 1e-12;

}  // namespace digitnet

#endif
