#ifndef DIGITNET_LAYERS_HPP
#define DIGITNET_LAYERS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "digitnet/tensor.hpp"

namespace digitnet {

enum class LayerKind : std::uint8_t {
  conv2d = 0,
  maxpool2d = 1,
  flatten = 2,
  dense = 3,
  relu = 4,
  dropout = 5,
  softmax = 6,
  sigmoid = 7,
};

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // conv2d
  std::size_t kernel_h = 0, kernel_w = 0, in_channels = 0, filters = 0;
  // maxpool2d
  std::size_t pool = 2, stride = 2;
  // dense
  std::size_t in_width = 0, out_width = 0;
  // dropout
  double rate = 0.0;

  static LayerSpec Conv2d(std::size_t kernel, std::size_t in_channels, std::size_t filters);
  static LayerSpec MaxPool2d(std::size_t pool = 2, std::size_t stride = 2);
  static LayerSpec Flatten();
  static LayerSpec Dense(std::size_t in_width, std::size_t out_width);
  static LayerSpec Relu();
  static LayerSpec Dropout(double rate);
  static LayerSpec Softmax();
  static LayerSpec Sigmoid();
};

struct LayerParams {
  Tensor weights;  // conv: [kh,kw,C,F]; dense: [out,in]; empty otherwise
  Tensor bias;     // conv: [F]; dense: [out]; empty otherwise
};

enum class Mode { train, eval };

// ---- layer kernels ----------------------------------------------------
// Batched inputs carry a leading batch dimension; the rank-3 / rank-1
// spellings from the per-sample contracts are accepted too and treated as
// a batch of one.

/// Valid cross-correlation, stride 1.
/// input [B,H,W,C] (or [H,W,C]), weights [kh,kw,C,F], bias [F]
/// -> [B,H-kh+1,W-kw+1,F] (or rank-3).
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Exact adjoint of conv2d_forward.
void conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                     Tensor& grad_input, Tensor& grad_weights, Tensor& grad_bias);

/// 2x2/stride-2 max pooling by default; floor semantics on odd extents.
/// argmax_out receives, per output cell, the flat index of the winning
/// input cell (first hit in row-major order on ties).
Tensor maxpool2d_forward(const Tensor& input, std::size_t pool, std::size_t stride,
                         std::vector<std::uint32_t>* argmax_out);
Tensor maxpool2d_backward(const std::vector<std::size_t>& input_shape,
                          const std::vector<std::uint32_t>& argmax, const Tensor& grad_out);

/// y = W x + b per row; input [B,n] (or [n]), W [m,n], b [m].
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                    Tensor& grad_input, Tensor& grad_weights, Tensor& grad_bias);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

/// Inverted dropout: train mode zeroes with probability p and scales the
/// survivors by 1/(1-p); eval mode is the identity. mask_out receives the
/// applied multiplier per element.
Tensor dropout_forward(const Tensor& input, double p, Mode mode, SeededRng& rng, Tensor* mask_out);
Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out);

/// Row-wise stable softmax.
Tensor softmax_forward(const Tensor& input);
/// General softmax Jacobian product (per row): g_in = y * (g - <g, y>).
Tensor softmax_backward(const Tensor& output, const Tensor& grad_out);

Tensor sigmoid_forward(const Tensor& input);
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

// ---- network ----------------------------------------------------------

struct LayerCache {
  Tensor input;
  Tensor output;
  Tensor mask;
  std::vector<std::uint32_t> pool_argmax;
  std::vector<std::size_t> input_shape;
};

/// Produced by one forward pass, consumed by at most one backward pass.
struct ForwardCache {
  std::vector<LayerCache> layers;
  std::size_t batch = 1;
  bool batched = false;
  bool consumed = false;
};

/// Strict sequence of layers with per-layer parameters and gradients.
class Network {
public:
  Network() = default;

  /// Validates specs and initializes parameters from the given rng
  /// (scaled normal weights, zero biases).
  static Network build(std::vector<LayerSpec> specs, SeededRng& init_rng);

  /// Rebuild from serialized parts; shapes are validated.
  static Network from_parts(std::vector<LayerSpec> specs, std::vector<LayerParams> params);

  const std::vector<LayerSpec>& layers() const noexcept { return specs_; }
  std::vector<LayerParams>& params() noexcept { return params_; }
  const std::vector<LayerParams>& params() const noexcept { return params_; }
  std::vector<LayerParams>& grads() noexcept { return grads_; }

  void set_mode(Mode m) noexcept { mode_ = m; }
  Mode mode() const noexcept { return mode_; }

  /// Shapes after each layer for the given input shape (without batch dim);
  /// throws ConfigError when consecutive layers do not compose.
  std::vector<std::vector<std::size_t>> shape_chain(const std::vector<std::size_t>& input_shape) const;

  /// Forward pass. dropout_rng is required in train mode when the network
  /// contains dropout layers.
  Tensor forward(const Tensor& input, ForwardCache* cache = nullptr,
                 SeededRng* dropout_rng = nullptr) const;

  /// Eval-mode forward regardless of the current mode; a pure function of
  /// the input and parameters.
  Tensor infer(const Tensor& input) const;

  /// Reverse pass; fills grads(). With from_logits the gradient is taken
  /// w.r.t. the input of a trailing softmax layer (fused softmax+CE path).
  void backward(ForwardCache& cache, Tensor grad_out, bool from_logits = false);

  void zero_grads();

  std::vector<Tensor*> param_tensors();
  std::vector<Tensor*> grad_tensors();
  std::size_t param_count() const;

  /// Per-layer summary with parameter counts; input_shape as in shape_chain.
  std::string describe(const std::vector<std::size_t>& input_shape) const;

  /// Indices (into layers()) of the conv2d layers, in order.
  std::vector<std::size_t> conv_layer_indices() const;

private:
  Tensor forward_with_mode(const Tensor& input, ForwardCache* cache, SeededRng* dropout_rng,
                           Mode mode) const;

  std::vector<LayerSpec> specs_;
  std::vector<LayerParams> params_;
  std::vector<LayerParams> grads_;
  Mode mode_ = Mode::train;
};

}  // namespace digitnet

#endif
