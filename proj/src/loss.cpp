#include "digitnet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "digitnet/layers.hpp"

namespace digitnet {

void validate(const SgdConfig& cfg) {
  if (!(cfg.lr0 > 0.0)) throw ConfigError("learning rate must be positive");
  if (cfg.decay < 0.0) throw ConfigError("decay must be non-negative");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
}

OptimizerState OptimizerState::for_params(const std::vector<Tensor*>& params) {
  OptimizerState st;
  st.velocity.reserve(params.size());
  for (const Tensor* p : params) st.velocity.emplace_back(p->shape());
  return st;
}

double categorical_crossentropy(const Tensor& probs, const Tensor& target) {
  if (!probs.same_shape(target)) {
    throw ShapeError("crossentropy: shape mismatch " + probs.shape_str() + " vs " +
                     target.shape_str());
  }
  if (probs.size() == 0) throw DomainError("crossentropy of empty tensors is undefined");
  const std::size_t n = probs.rank() == 2 ? probs.dim(1) : probs.size();
  const std::size_t rows = probs.size() / n;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = probs.data() + r * n;
    const double* t = target.data() + r * n;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] != 0.0) {
        const double clipped = std::clamp(p[i], kLogClipEpsilon, 1.0 - kLogClipEpsilon);
        loss -= t[i] * std::log(clipped);
      }
    }
    total += loss;
  }
  return total / static_cast<double>(rows);
}

Tensor softmax_ce_grad(const Tensor& logits, const Tensor& target) {
  if (!logits.same_shape(target)) {
    throw ShapeError("softmax_ce_grad: shape mismatch " + logits.shape_str() + " vs " +
                     target.shape_str());
  }
  return sub(softmax_forward(logits), target);
}

double mse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("mse: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  if (a.size() == 0) throw DomainError("mse of empty tensors is undefined");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total / static_cast<double>(a.size());
}

double effective_lr(const SgdConfig& cfg, std::uint64_t t) {
  return cfg.lr0 / (1.0 + cfg.decay * static_cast<double>(t));
}

void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
              OptimizerState& state, const SgdConfig& cfg) {
  validate(cfg);
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ShapeError("sgd_step: parameter/gradient/velocity counts disagree");
  }
  const double eta = effective_lr(cfg, state.iteration);
  const double mu = cfg.momentum;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = *params[k];
    const Tensor& g = *grads[k];
    Tensor& v = state.velocity[k];
    if (!w.same_shape(g) || !w.same_shape(v)) {
      throw ShapeError("sgd_step: shape mismatch at parameter " + std::to_string(k) + ": " +
                       w.shape_str() + " vs " + g.shape_str());
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] - eta * g[i];
      w[i] += cfg.nesterov ? mu * v[i] - eta * g[i] : v[i];
    }
  }
  ++state.iteration;
}

}  // namespace digitnet
