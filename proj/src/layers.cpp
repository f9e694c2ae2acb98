#include "digitnet/layers.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "digitnet/parallel.hpp"

namespace digitnet {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::softmax: return "softmax";
    case LayerKind::sigmoid: return "sigmoid";
  }
  return "?";
}

LayerSpec LayerSpec::Conv2d(std::size_t kernel, std::size_t in_channels, std::size_t filters) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.kernel_h = s.kernel_w = kernel;
  s.in_channels = in_channels;
  s.filters = filters;
  return s;
}
LayerSpec LayerSpec::MaxPool2d(std::size_t pool, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::maxpool2d;
  s.pool = pool;
  s.stride = stride;
  return s;
}
LayerSpec LayerSpec::Flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}
LayerSpec LayerSpec::Dense(std::size_t in_width, std::size_t out_width) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_width = in_width;
  s.out_width = out_width;
  return s;
}
LayerSpec LayerSpec::Relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}
LayerSpec LayerSpec::Dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  return s;
}
LayerSpec LayerSpec::Softmax() {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  return s;
}
LayerSpec LayerSpec::Sigmoid() {
  LayerSpec s;
  s.kind = LayerKind::sigmoid;
  return s;
}

namespace {

// Prepends a batch dimension of 1 when the input uses the per-sample
// spelling; `expected` is the rank with batch dimension included.
Tensor as_batched(const Tensor& t, std::size_t expected, bool& was_single) {
  if (t.rank() == expected) {
    was_single = false;
    return t;
  }
  if (t.rank() + 1 == expected) {
    was_single = true;
    std::vector<std::size_t> shape{1};
    shape.insert(shape.end(), t.shape().begin(), t.shape().end());
    return t.reshaped(shape);
  }
  throw ShapeError("expected rank " + std::to_string(expected) + " (batched) or " +
                   std::to_string(expected - 1) + " input, got " + t.shape_str());
}

// Same contract without copying already-batched tensors; the view borrows
// the caller's tensor for the duration of the kernel.
class BatchView {
public:
  BatchView(const Tensor& t, std::size_t expected) {
    if (t.rank() == expected) {
      view_ = &t;
      return;
    }
    single_ = true;
    owned_ = as_batched(t, expected, single_);
  }
  const Tensor& get() const { return view_ ? *view_ : owned_; }
  bool single() const { return single_; }

private:
  const Tensor* view_ = nullptr;
  Tensor owned_;
  bool single_ = false;
};

Tensor strip_batch(Tensor t, bool was_single) {
  if (!was_single) return t;
  std::vector<std::size_t> shape(t.shape().begin() + 1, t.shape().end());
  return std::move(t).reshaped(shape);
}

// col has one row per output position, laid out (dy, dx, c) to match the
// [kh,kw,C,F] weight layout viewed as a [kh*kw*C, F] matrix.
void im2col(const double* img, std::size_t H, std::size_t W, std::size_t C, std::size_t kh,
            std::size_t kw, double* col) {
  const std::size_t OH = H - kh + 1, OW = W - kw + 1;
  double* dst = col;
  for (std::size_t y = 0; y < OH; ++y) {
    for (std::size_t x = 0; x < OW; ++x) {
      for (std::size_t dy = 0; dy < kh; ++dy) {
        const double* src = img + ((y + dy) * W + x) * C;
        std::memcpy(dst, src, kw * C * sizeof(double));
        dst += kw * C;
      }
    }
  }
}

void col2im_add(const double* col, std::size_t H, std::size_t W, std::size_t C, std::size_t kh,
                std::size_t kw, double* img) {
  const std::size_t OH = H - kh + 1, OW = W - kw + 1;
  const double* src = col;
  for (std::size_t y = 0; y < OH; ++y) {
    for (std::size_t x = 0; x < OW; ++x) {
      for (std::size_t dy = 0; dy < kh; ++dy) {
        double* dst = img + ((y + dy) * W + x) * C;
        for (std::size_t i = 0; i < kw * C; ++i) dst[i] += src[i];
        src += kw * C;
      }
    }
  }
}

void check_conv_shapes(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 4) {
    throw ShapeError("conv2d weights must be [kh,kw,C,F], got " + weights.shape_str());
  }
  const std::size_t H = input.dim(1), W = input.dim(2), C = input.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1);
  if (weights.dim(2) != C) {
    throw ShapeError("conv2d channel mismatch: input " + input.shape_str() + " vs weights " +
                     weights.shape_str());
  }
  if (kh > H || kw > W) {
    throw ShapeError("conv2d kernel " + weights.shape_str() + " larger than input " +
                     input.shape_str());
  }
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(3)) {
    throw ShapeError("conv2d bias must be [F], got " + bias.shape_str());
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const BatchView bv(input, 4);
  const Tensor& in = bv.get();
  const bool single = bv.single();
  check_conv_shapes(in, weights, bias);
  const std::size_t B = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), F = weights.dim(3);
  const std::size_t OH = H - kh + 1, OW = W - kw + 1;
  const std::size_t K = kh * kw * C, cells = OH * OW;

  Tensor out({B, OH, OW, F});
  parallel_for(B, [&](std::size_t b0, std::size_t b1) {
    std::vector<double> col(cells * K);
    for (std::size_t b = b0; b < b1; ++b) {
      im2col(in.data() + b * H * W * C, H, W, C, kh, kw, col.data());
      double* o = out.data() + b * cells * F;
      mat::mm_nn(col.data(), weights.data(), o, cells, K, F);
      for (std::size_t r = 0; r < cells; ++r) {
        for (std::size_t f = 0; f < F; ++f) o[r * F + f] += bias[f];
      }
    }
  });
  return strip_batch(std::move(out), single);
}

void conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                     Tensor& grad_input, Tensor& grad_weights, Tensor& grad_bias) {
  const BatchView bin(input, 4);
  const Tensor& in = bin.get();
  const bool single = bin.single();
  const BatchView bgout(grad_out, 4);
  const Tensor& gout = bgout.get();
  check_conv_shapes(in, weights, Tensor({weights.dim(3)}));
  const std::size_t B = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), F = weights.dim(3);
  const std::size_t OH = H - kh + 1, OW = W - kw + 1;
  if (gout.shape() != std::vector<std::size_t>{B, OH, OW, F}) {
    throw ShapeError("conv2d_backward: grad shape " + grad_out.shape_str() +
                     " does not match forward output " +
                     shape_to_string({B, OH, OW, F}));
  }
  const std::size_t K = kh * kw * C, cells = OH * OW;

  Tensor gin({B, H, W, C});
  grad_weights = Tensor(weights.shape());
  grad_bias = Tensor({F});

  for (std::size_t i = 0; i < gout.size(); ++i) grad_bias[i % F] += gout[i];

  // grad_col = gout * W^T; transposing W once turns the inner loop into
  // long contiguous rows.
  std::vector<double> wt(F * K);
  for (std::size_t t = 0; t < K; ++t) {
    for (std::size_t f = 0; f < F; ++f) wt[f * K + t] = weights[t * F + f];
  }

  // Weight gradients accumulate per fixed chunk, then reduce in chunk
  // order, so the result is bitwise independent of the thread count.
  const std::size_t chunks = B < kGradChunks ? B : kGradChunks;
  const std::size_t per = (B + chunks - 1) / chunks;
  std::vector<std::vector<double>> gw_chunk(chunks);
  parallel_chunks(chunks, [&](std::size_t c) {
    std::vector<double>& acc = gw_chunk[c];
    acc.assign(K * F, 0.0);
    std::vector<double> col(cells * K);
    std::vector<double> tmp(K * F);
    std::vector<double> gcol(cells * K);
    const std::size_t b_end = std::min(B, (c + 1) * per);
    for (std::size_t b = c * per; b < b_end; ++b) {
      const double* go = gout.data() + b * cells * F;
      im2col(in.data() + b * H * W * C, H, W, C, kh, kw, col.data());
      mat::mm_tn(col.data(), go, tmp.data(), K, cells, F);
      for (std::size_t i = 0; i < K * F; ++i) acc[i] += tmp[i];
      mat::mm_nn(go, wt.data(), gcol.data(), cells, F, K);
      col2im_add(gcol.data(), H, W, C, kh, kw, gin.data() + b * H * W * C);
    }
  });
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t i = 0; i < K * F; ++i) grad_weights[i] += gw_chunk[c][i];
  }
  grad_input = strip_batch(std::move(gin), single);
}

Tensor maxpool2d_forward(const Tensor& input, std::size_t pool, std::size_t stride,
                         std::vector<std::uint32_t>* argmax_out) {
  const BatchView bv(input, 4);
  const Tensor& in = bv.get();
  const bool single = bv.single();
  const std::size_t B = in.dim(0), H = in.dim(1), W = in.dim(2), F = in.dim(3);
  if (pool == 0 || stride == 0) throw ConfigError("maxpool2d: pool and stride must be positive");
  if (H < pool || W < pool) {
    throw ShapeError("maxpool2d: input " + in.shape_str() + " smaller than pool " +
                     std::to_string(pool));
  }
  const std::size_t OH = (H - pool) / stride + 1, OW = (W - pool) / stride + 1;
  Tensor out({B, OH, OW, F});
  if (argmax_out) argmax_out->assign(B * OH * OW * F, 0);

  parallel_for(B, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const double* img = in.data() + b * H * W * F;
      double* o = out.data() + b * OH * OW * F;
      std::uint32_t* am = argmax_out ? argmax_out->data() + b * OH * OW * F : nullptr;
      for (std::size_t y = 0; y < OH; ++y) {
        for (std::size_t x = 0; x < OW; ++x) {
          for (std::size_t f = 0; f < F; ++f) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (std::size_t dy = 0; dy < pool; ++dy) {
              for (std::size_t dx = 0; dx < pool; ++dx) {
                const std::size_t idx = ((y * stride + dy) * W + (x * stride + dx)) * F + f;
                if (img[idx] > best) {
                  best = img[idx];
                  best_idx = idx;
                }
              }
            }
            o[(y * OW + x) * F + f] = best;
            if (am) am[(y * OW + x) * F + f] = static_cast<std::uint32_t>(best_idx);
          }
        }
      }
    }
  });
  return strip_batch(std::move(out), single);
}

Tensor maxpool2d_backward(const std::vector<std::size_t>& input_shape,
                          const std::vector<std::uint32_t>& argmax, const Tensor& grad_out) {
  const BatchView bv(grad_out, 4);
  const Tensor& gout = bv.get();
  const bool single = bv.single();
  std::vector<std::size_t> full = input_shape;
  if (full.size() == 3) full.insert(full.begin(), 1);
  if (full.size() != 4) throw ShapeError("maxpool2d_backward: bad input shape");
  const std::size_t B = full[0];
  const std::size_t sample = full[1] * full[2] * full[3];
  const std::size_t cells = gout.size() / B;
  if (argmax.size() != gout.size()) {
    throw ShapeError("maxpool2d_backward: argmax/grad size mismatch");
  }
  Tensor gin(full);
  parallel_for(B, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      double* g = gin.data() + b * sample;
      const double* go = gout.data() + b * cells;
      const std::uint32_t* am = argmax.data() + b * cells;
      for (std::size_t i = 0; i < cells; ++i) g[am[i]] += go[i];
    }
  });
  return strip_batch(std::move(gin), single);
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const BatchView bv(input, 2);
  const Tensor& x = bv.get();
  const bool single = bv.single();
  if (weights.rank() != 2) throw ShapeError("dense weights must be [out,in], got " + weights.shape_str());
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (x.dim(1) != n) {
    throw ShapeError("dense: input width " + std::to_string(x.dim(1)) +
                     " does not match weights " + weights.shape_str());
  }
  if (bias.rank() != 1 || bias.dim(0) != m) {
    throw ShapeError("dense bias must be [" + std::to_string(m) + "], got " + bias.shape_str());
  }
  const std::size_t B = x.dim(0);
  Tensor out({B, m});
  mat::mm_nt(x.data(), weights.data(), out.data(), B, n, m);
  for (std::size_t b = 0; b < B; ++b) {
    double* o = out.data() + b * m;
    for (std::size_t j = 0; j < m; ++j) o[j] += bias[j];
  }
  return strip_batch(std::move(out), single);
}

void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                    Tensor& grad_input, Tensor& grad_weights, Tensor& grad_bias) {
  const BatchView bx(input, 2);
  const Tensor& x = bx.get();
  const bool single = bx.single();
  const BatchView bg(grad_out, 2);
  const Tensor& g = bg.get();
  const std::size_t m = weights.dim(0), n = weights.dim(1), B = x.dim(0);
  if (g.dim(0) != B || g.dim(1) != m) {
    throw ShapeError("dense_backward: grad shape " + grad_out.shape_str() + " does not match output");
  }
  Tensor gi({B, n});
  mat::mm_nn(g.data(), weights.data(), gi.data(), B, m, n);
  grad_weights = Tensor({m, n});
  mat::mm_tn(g.data(), x.data(), grad_weights.data(), m, B, n);
  grad_bias = Tensor({m});
  for (std::size_t b = 0; b < B; ++b) {
    const double* gb = g.data() + b * m;
    for (std::size_t j = 0; j < m; ++j) grad_bias[j] += gb[j];
  }
  grad_input = strip_batch(std::move(gi), single);
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (!input.same_shape(grad_out)) {
    throw ShapeError("relu_backward: shape mismatch " + input.shape_str() + " vs " +
                     grad_out.shape_str());
  }
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return out;
}

Tensor dropout_forward(const Tensor& input, double p, Mode mode, SeededRng& rng, Tensor* mask_out) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(p));
  }
  if (mode == Mode::eval) {
    if (mask_out) {
      *mask_out = Tensor(input.shape());
      for (std::size_t i = 0; i < mask_out->size(); ++i) (*mask_out)[i] = 1.0;
    }
    return input;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor mask(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
  }
  Tensor out = mul(input, mask);
  if (mask_out) *mask_out = std::move(mask);
  return out;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out) { return mul(mask, grad_out); }

namespace {

template <class Fn>
void for_each_row(const Tensor& t, Fn fn) {
  const std::size_t n = t.rank() == 1 ? t.dim(0) : t.dim(t.rank() - 1);
  const std::size_t rows = t.size() / n;
  parallel_for(rows, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) fn(r, n);
  });
}

}  // namespace

Tensor softmax_forward(const Tensor& input) {
  if (input.size() == 0) throw DomainError("softmax of an empty tensor is undefined");
  Tensor out(input.shape());
  for_each_row(input, [&](std::size_t r, std::size_t n) {
    const double* z = input.data() + r * n;
    double* o = out.data() + r * n;
    double m = z[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, z[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(z[i] - m);
      sum += o[i];
    }
    for (std::size_t i = 0; i < n; ++i) o[i] /= sum;
  });
  return out;
}

Tensor softmax_backward(const Tensor& output, const Tensor& grad_out) {
  if (!output.same_shape(grad_out)) {
    throw ShapeError("softmax_backward: shape mismatch");
  }
  Tensor gin(output.shape());
  for_each_row(output, [&](std::size_t r, std::size_t n) {
    const double* y = output.data() + r * n;
    const double* g = grad_out.data() + r * n;
    double* o = gin.data() + r * n;
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < n; ++i) o[i] = y[i] * (g[i] - dot);
  });
  return gin;
}

Tensor sigmoid_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-input[i]));
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
  if (!output.same_shape(grad_out)) throw ShapeError("sigmoid_backward: shape mismatch");
  Tensor gin(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    gin[i] = grad_out[i] * output[i] * (1.0 - output[i]);
  }
  return gin;
}

// ---- network ----------------------------------------------------------

namespace {

void validate_spec(const LayerSpec& s, std::size_t index) {
  const std::string where = "layer " + std::to_string(index) + " (" + layer_kind_name(s.kind) + "): ";
  switch (s.kind) {
    case LayerKind::conv2d:
      if (s.kernel_h == 0 || s.kernel_w == 0 || s.in_channels == 0 || s.filters == 0) {
        throw ConfigError(where + "kernel, channels and filters must be positive");
      }
      break;
    case LayerKind::maxpool2d:
      if (s.pool == 0 || s.stride == 0) throw ConfigError(where + "pool and stride must be positive");
      break;
    case LayerKind::dense:
      if (s.in_width == 0 || s.out_width == 0) throw ConfigError(where + "widths must be positive");
      break;
    case LayerKind::dropout:
      if (s.rate < 0.0 || s.rate >= 1.0) {
        throw ConfigError(where + "rate must be in [0,1), got " + std::to_string(s.rate));
      }
      break;
    default:
      break;
  }
}

template <class Fn>
auto with_layer_context(std::size_t index, LayerKind kind, Fn fn) {
  const auto prefix = [&] {
    return "layer " + std::to_string(index) + " (" + std::string(layer_kind_name(kind)) + "): ";
  };
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError(prefix() + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix() + e.what());
  } catch (const DomainError& e) {
    throw DomainError(prefix() + e.what());
  }
}

}  // namespace

Network Network::build(std::vector<LayerSpec> specs, SeededRng& init_rng) {
  Network net;
  for (std::size_t i = 0; i < specs.size(); ++i) validate_spec(specs[i], i);
  net.specs_ = std::move(specs);
  net.params_.resize(net.specs_.size());
  net.grads_.resize(net.specs_.size());
  for (std::size_t i = 0; i < net.specs_.size(); ++i) {
    const LayerSpec& s = net.specs_[i];
    const bool feeds_relu =
        i + 1 < net.specs_.size() && net.specs_[i + 1].kind == LayerKind::relu;
    if (s.kind == LayerKind::conv2d) {
      const std::size_t fan_in = s.kernel_h * s.kernel_w * s.in_channels;
      const double std_dev = std::sqrt((feeds_relu ? 2.0 : 1.0) / static_cast<double>(fan_in));
      Tensor w({s.kernel_h, s.kernel_w, s.in_channels, s.filters});
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = std_dev * init_rng.normal();
      net.params_[i] = {std::move(w), Tensor({s.filters})};
      net.grads_[i] = {Tensor({s.kernel_h, s.kernel_w, s.in_channels, s.filters}),
                       Tensor({s.filters})};
    } else if (s.kind == LayerKind::dense) {
      const double std_dev =
          std::sqrt((feeds_relu ? 2.0 : 1.0) / static_cast<double>(s.in_width));
      Tensor w({s.out_width, s.in_width});
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = std_dev * init_rng.normal();
      net.params_[i] = {std::move(w), Tensor({s.out_width})};
      net.grads_[i] = {Tensor({s.out_width, s.in_width}), Tensor({s.out_width})};
    }
  }
  return net;
}

Network Network::from_parts(std::vector<LayerSpec> specs, std::vector<LayerParams> params) {
  if (specs.size() != params.size()) {
    throw FormatError("parameter list does not match architecture: " +
                      std::to_string(params.size()) + " entries for " +
                      std::to_string(specs.size()) + " layers");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    validate_spec(specs[i], i);
    const LayerSpec& s = specs[i];
    if (s.kind == LayerKind::conv2d) {
      const std::vector<std::size_t> want{s.kernel_h, s.kernel_w, s.in_channels, s.filters};
      if (params[i].weights.shape() != want || params[i].bias.shape() != std::vector<std::size_t>{s.filters}) {
        throw FormatError("layer " + std::to_string(i) + ": stored conv2d parameters have wrong shape");
      }
    } else if (s.kind == LayerKind::dense) {
      const std::vector<std::size_t> want{s.out_width, s.in_width};
      if (params[i].weights.shape() != want || params[i].bias.shape() != std::vector<std::size_t>{s.out_width}) {
        throw FormatError("layer " + std::to_string(i) + ": stored dense parameters have wrong shape");
      }
    } else if (params[i].weights.size() != 0 || params[i].bias.size() != 0) {
      throw FormatError("layer " + std::to_string(i) + ": unexpected parameters for " +
                        layer_kind_name(s.kind));
    }
  }
  Network net;
  net.specs_ = std::move(specs);
  net.params_ = std::move(params);
  net.grads_.resize(net.specs_.size());
  for (std::size_t i = 0; i < net.specs_.size(); ++i) {
    net.grads_[i] = {Tensor::zeros_like(net.params_[i].weights),
                     Tensor::zeros_like(net.params_[i].bias)};
  }
  return net;
}

std::vector<std::vector<std::size_t>> Network::shape_chain(
    const std::vector<std::size_t>& input_shape) const {
  std::vector<std::vector<std::size_t>> chain;
  chain.push_back(input_shape);
  std::vector<std::size_t> cur = input_shape;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    const std::string where =
        "layer " + std::to_string(i) + " (" + layer_kind_name(s.kind) + "): ";
    switch (s.kind) {
      case LayerKind::conv2d: {
        if (cur.size() != 3) throw ConfigError(where + "needs [H,W,C] input, got " + shape_to_string(cur));
        if (cur[2] != s.in_channels) {
          throw ConfigError(where + "expects " + std::to_string(s.in_channels) +
                            " channels, input has " + std::to_string(cur[2]));
        }
        if (s.kernel_h > cur[0] || s.kernel_w > cur[1]) {
          throw ConfigError(where + "kernel exceeds input " + shape_to_string(cur));
        }
        cur = {cur[0] - s.kernel_h + 1, cur[1] - s.kernel_w + 1, s.filters};
        break;
      }
      case LayerKind::maxpool2d: {
        if (cur.size() != 3) throw ConfigError(where + "needs [H,W,F] input, got " + shape_to_string(cur));
        if (cur[0] < s.pool || cur[1] < s.pool) {
          throw ConfigError(where + "input " + shape_to_string(cur) + " smaller than pool");
        }
        cur = {(cur[0] - s.pool) / s.stride + 1, (cur[1] - s.pool) / s.stride + 1, cur[2]};
        break;
      }
      case LayerKind::flatten: {
        std::size_t n = 1;
        for (std::size_t d : cur) n *= d;
        cur = {n};
        break;
      }
      case LayerKind::dense: {
        if (cur.size() != 1) throw ConfigError(where + "needs flat input, got " + shape_to_string(cur));
        if (cur[0] != s.in_width) {
          throw ConfigError(where + "expects width " + std::to_string(s.in_width) +
                            ", input has " + std::to_string(cur[0]));
        }
        cur = {s.out_width};
        break;
      }
      default:
        break;  // shape preserved
    }
    chain.push_back(cur);
  }
  return chain;
}

Tensor Network::forward(const Tensor& input, ForwardCache* cache, SeededRng* dropout_rng) const {
  return forward_with_mode(input, cache, dropout_rng, mode_);
}

Tensor Network::infer(const Tensor& input) const {
  return forward_with_mode(input, nullptr, nullptr, Mode::eval);
}

Tensor Network::forward_with_mode(const Tensor& input, ForwardCache* cache,
                                  SeededRng* dropout_rng, Mode mode) const {
  // Leading batch dimension detection: conv/pool stages take rank-4
  // batched input, flat stages rank-2. A flatten-first network accepts
  // both spellings; rank-2 input is read as a flat batch.
  bool single = false;
  Tensor cur = input;
  if (!specs_.empty()) {
    const LayerKind first = specs_.front().kind;
    if (first == LayerKind::conv2d || first == LayerKind::maxpool2d) {
      cur = as_batched(input, 4, single);
    } else if (first == LayerKind::flatten) {
      if (input.rank() == 4 || input.rank() == 2) {
        single = false;
      } else if (input.rank() == 3 || input.rank() == 1) {
        single = true;
        std::vector<std::size_t> shape{1};
        shape.insert(shape.end(), input.shape().begin(), input.shape().end());
        cur = input.reshaped(shape);
      } else {
        throw ShapeError("flatten input must have rank 1..4, got " + input.shape_str());
      }
    } else {
      cur = as_batched(input, 2, single);
    }
  }
  if (cache) {
    cache->layers.assign(specs_.size(), LayerCache{});
    cache->batch = cur.rank() > 1 ? cur.dim(0) : 1;
    cache->batched = !single;
    cache->consumed = false;
  }
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    cur = with_layer_context(i, s.kind, [&]() -> Tensor {
      LayerCache* lc = cache ? &cache->layers[i] : nullptr;
      switch (s.kind) {
        case LayerKind::conv2d: {
          Tensor out = conv2d_forward(cur, params_[i].weights, params_[i].bias);
          if (lc) lc->input = std::move(cur);
          return out;
        }
        case LayerKind::maxpool2d: {
          std::vector<std::uint32_t> am;
          Tensor out = maxpool2d_forward(cur, s.pool, s.stride, lc ? &am : nullptr);
          if (lc) {
            lc->pool_argmax = std::move(am);
            lc->input_shape = cur.shape();
          }
          return out;
        }
        case LayerKind::flatten: {
          std::vector<std::size_t> shape = cur.shape();
          std::size_t n = 1;
          for (std::size_t d = 1; d < shape.size(); ++d) n *= shape[d];
          Tensor out = std::move(cur).reshaped({shape[0], n});
          if (lc) lc->input_shape = shape;
          return out;
        }
        case LayerKind::dense: {
          Tensor out = dense_forward(cur, params_[i].weights, params_[i].bias);
          if (lc) lc->input = std::move(cur);
          return out;
        }
        case LayerKind::relu: {
          Tensor out = relu_forward(cur);
          if (lc) lc->input = std::move(cur);
          return out;
        }
        case LayerKind::dropout: {
          if (mode == Mode::train && dropout_rng == nullptr) {
            throw ConfigError("train-mode dropout needs an rng");
          }
          static SeededRng unused(0);
          Tensor out = dropout_forward(cur, s.rate, mode,
                                       dropout_rng ? *dropout_rng : unused,
                                       lc ? &lc->mask : nullptr);
          return out;
        }
        case LayerKind::softmax: {
          Tensor out = softmax_forward(cur);
          if (lc) lc->output = out;
          return out;
        }
        case LayerKind::sigmoid: {
          Tensor out = sigmoid_forward(cur);
          if (lc) lc->output = out;
          return out;
        }
      }
      throw DomainError("unknown layer kind");
    });
  }
  return strip_batch(std::move(cur), single);
}

void Network::backward(ForwardCache& cache, Tensor grad_out, bool from_logits) {
  if (cache.consumed) throw DomainError("forward cache has already been consumed by a backward pass");
  if (cache.layers.size() != specs_.size()) {
    throw ShapeError("cache does not match network: " + std::to_string(cache.layers.size()) +
                     " layers cached, network has " + std::to_string(specs_.size()));
  }
  cache.consumed = true;

  std::size_t start = specs_.size();
  if (from_logits) {
    if (specs_.empty() || specs_.back().kind != LayerKind::softmax) {
      throw DomainError("from_logits backward requires a trailing softmax layer");
    }
    start = specs_.size() - 1;
  }

  Tensor grad = std::move(grad_out);
  if (!cache.batched && grad.rank() >= 1) {
    std::vector<std::size_t> shape{1};
    shape.insert(shape.end(), grad.shape().begin(), grad.shape().end());
    grad = std::move(grad).reshaped(shape);
  }

  for (std::size_t ii = start; ii-- > 0;) {
    const LayerSpec& s = specs_[ii];
    grad = with_layer_context(ii, s.kind, [&]() -> Tensor {
      LayerCache& lc = cache.layers[ii];
      switch (s.kind) {
        case LayerKind::conv2d: {
          Tensor gi;
          conv2d_backward(lc.input, params_[ii].weights, grad, gi, grads_[ii].weights,
                          grads_[ii].bias);
          return gi;
        }
        case LayerKind::maxpool2d:
          return maxpool2d_backward(lc.input_shape, lc.pool_argmax, grad);
        case LayerKind::flatten:
          return std::move(grad).reshaped(lc.input_shape);
        case LayerKind::dense: {
          Tensor gi;
          dense_backward(lc.input, params_[ii].weights, grad, gi, grads_[ii].weights,
                         grads_[ii].bias);
          return gi;
        }
        case LayerKind::relu:
          return relu_backward(lc.input, grad);
        case LayerKind::dropout:
          if (lc.mask.size() == 0) return grad;  // eval-mode cache
          return dropout_backward(lc.mask, grad);
        case LayerKind::softmax:
          return softmax_backward(lc.output, grad);
        case LayerKind::sigmoid:
          return sigmoid_backward(lc.output, grad);
      }
      throw DomainError("unknown layer kind");
    });
  }
}

void Network::zero_grads() {
  for (LayerParams& g : grads_) {
    for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] = 0.0;
    for (std::size_t i = 0; i < g.bias.size(); ++i) g.bias[i] = 0.0;
  }
}

std::vector<Tensor*> Network::param_tensors() {
  std::vector<Tensor*> out;
  for (LayerParams& p : params_) {
    if (p.weights.size()) out.push_back(&p.weights);
    if (p.bias.size()) out.push_back(&p.bias);
  }
  return out;
}

std::vector<Tensor*> Network::grad_tensors() {
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (params_[i].weights.size()) out.push_back(&grads_[i].weights);
    if (params_[i].bias.size()) out.push_back(&grads_[i].bias);
  }
  return out;
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const LayerParams& p : params_) n += p.weights.size() + p.bias.size();
  return n;
}

std::vector<std::size_t> Network::conv_layer_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].kind == LayerKind::conv2d) out.push_back(i);
  }
  return out;
}

std::string Network::describe(const std::vector<std::size_t>& input_shape) const {
  const auto chain = shape_chain(input_shape);
  std::ostringstream os;
  const auto dims = [](const std::vector<std::size_t>& s) {
    std::string t;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) t += 'x';
      t += std::to_string(s[i]);
    }
    return t;
  };
  os << "input: " << dims(input_shape) << "\n";
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    os << "  " << i << "  " << layer_kind_name(s.kind);
    switch (s.kind) {
      case LayerKind::conv2d:
        os << " " << s.kernel_h << "x" << s.kernel_w << "x" << s.in_channels << " -> "
           << s.filters << " filters";
        break;
      case LayerKind::maxpool2d:
        os << " " << s.pool << "x" << s.pool;
        break;
      case LayerKind::dense:
        os << " " << s.in_width << " -> " << s.out_width;
        break;
      case LayerKind::dropout:
        os << " p=" << s.rate;
        break;
      default:
        break;
    }
    os << "  out " << dims(chain[i + 1]);
    const std::size_t n = params_[i].weights.size() + params_[i].bias.size();
    if (n) os << "  params " << n;
    os << "\n";
  }
  os << "total parameters: " << param_count() << "\n";
  os << "output: " << dims(chain.back()) << "\n";
  return os.str();
}

}  // namespace digitnet
