#include "digitnet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace digitnet {

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: element counts differ: " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  if (a.size() == 0) throw DomainError("cosine_similarity of empty tensors is undefined");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na <= kZeroNormThreshold || nb <= kZeroNormThreshold) {
    throw DomainError("cosine_similarity undefined for zero-norm input");
  }
  return dot / (na * nb);
}

namespace {

// One filter of a [kh,kw,C,F] weight tensor flattened to k*k*C values.
std::vector<double> filter_vector(const Tensor& w, std::size_t f) {
  const std::size_t F = w.dim(3);
  const std::size_t n = w.size() / F;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = w[i * F + f];
  return v;
}

}  // namespace

SimilarityMatrix similarity_matrix(const Tensor& conv_weights, std::size_t layer_index) {
  if (conv_weights.rank() != 4) {
    throw ShapeError("similarity_matrix expects [kh,kw,C,F] weights, got " +
                     conv_weights.shape_str());
  }
  const std::size_t F = conv_weights.dim(3);
  if (F < 2) throw DomainError("similarity_matrix needs at least 2 filters");

  std::vector<std::vector<double>> vecs(F);
  std::vector<double> norms(F);
  for (std::size_t f = 0; f < F; ++f) {
    vecs[f] = filter_vector(conv_weights, f);
    double s = 0.0;
    for (double v : vecs[f]) s += v * v;
    norms[f] = std::sqrt(s);
  }

  SimilarityMatrix m;
  m.layer_index = layer_index;
  m.n = F;
  m.values.assign(F * F, 0.0);
  for (std::size_t i = 0; i < F; ++i) m.values[i * F + i] = 1.0;
  for (std::size_t i = 0; i < F; ++i) {
    for (std::size_t j = i + 1; j < F; ++j) {
      if (norms[i] <= kZeroNormThreshold || norms[j] <= kZeroNormThreshold) {
        ++m.skipped;
        continue;
      }
      double dot = 0.0;
      for (std::size_t t = 0; t < vecs[i].size(); ++t) dot += vecs[i][t] * vecs[j][t];
      const double sim = dot / (norms[i] * norms[j]);
      m.values[i * F + j] = sim;
      m.values[j * F + i] = sim;
    }
  }
  return m;
}

SimilarPairReport similar_pairs(const SimilarityMatrix& matrix, double threshold,
                                bool abs_similarity, std::size_t kernel) {
  if (!(threshold > -1.0) || threshold > 1.0) {
    throw ConfigError("threshold must lie in (-1, 1], got " + std::to_string(threshold));
  }
  SimilarPairReport report;
  report.layer_index = matrix.layer_index;
  report.kernel = kernel;
  report.n = matrix.n;
  report.threshold = threshold;
  report.total_pairs = matrix.n * (matrix.n - 1) / 2;
  report.skipped = matrix.skipped;
  for (std::size_t i = 0; i < matrix.n; ++i) {
    for (std::size_t j = i + 1; j < matrix.n; ++j) {
      const double sim = matrix.at(i, j);
      const double score = abs_similarity ? std::fabs(sim) : sim;
      if (score >= threshold) report.pairs.push_back({i, j, sim});
    }
  }
  std::stable_sort(report.pairs.begin(), report.pairs.end(),
                   [abs_similarity](const SimilarPair& a, const SimilarPair& b) {
                     const double sa = abs_similarity ? std::fabs(a.similarity) : a.similarity;
                     const double sb = abs_similarity ? std::fabs(b.similarity) : b.similarity;
                     if (sa != sb) return sa > sb;
                     if (a.i != b.i) return a.i < b.i;
                     return a.j < b.j;
                   });
  report.ratio = report.total_pairs == 0
                     ? 0.0
                     : static_cast<double>(report.pairs.size()) / static_cast<double>(report.total_pairs);
  return report;
}

AnalysisReport analyze_network(const Network& net, const std::vector<double>& thresholds,
                               bool abs_similarity) {
  AnalysisReport report;
  const auto conv_idx = net.conv_layer_indices();
  for (std::size_t c = 0; c < conv_idx.size(); ++c) {
    const LayerSpec& spec = net.layers()[conv_idx[c]];
    const SimilarityMatrix m = similarity_matrix(net.params()[conv_idx[c]].weights, c + 1);
    for (double t : thresholds) {
      report.rows.push_back(similar_pairs(m, t, abs_similarity, spec.kernel_h));
    }
  }
  return report;
}

AnalysisReport sweep(const SweepConfig& cfg, const Dataset& train_set) {
  if (cfg.filter_counts.empty()) throw ConfigError("sweep needs at least one filter count");
  if (cfg.thresholds.empty()) throw ConfigError("sweep needs at least one threshold");
  AnalysisReport merged;
  for (std::size_t n : cfg.filter_counts) {
    TrainingConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.seed = derive_seed(cfg.seed, "sweep", n);
    tc.sgd = cfg.sgd;
    tc.architecture = default_architecture(n, n);
    tc.limit_train = cfg.limit_train;
    const TrainResult result = train(tc, train_set, nullptr);
    const AnalysisReport one = analyze_network(result.session.net, cfg.thresholds, cfg.abs_similarity);
    merged.rows.insert(merged.rows.end(), one.rows.begin(), one.rows.end());
  }
  return merged;
}

namespace {

std::string threshold_tag(double t) { return format_g9(t); }

}  // namespace

void write_report_csv(const AnalysisReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "layer,kernel,filters,threshold,pair_count,total_pairs,ratio\n";
  for (const SimilarPairReport& r : report.rows) {
    out << r.layer_index << ',' << r.kernel << ',' << r.n << ',' << threshold_tag(r.threshold)
        << ',' << r.pairs.size() << ',' << r.total_pairs << ',' << format_g9(r.ratio) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

void write_report_details(const AnalysisReport& report, const std::string& out_dir) {
  // Filter counts vary across rows in sweep mode; disambiguate filenames.
  bool multi_count = false;
  for (const SimilarPairReport& r : report.rows) {
    if (r.n != report.rows.front().n && r.layer_index == report.rows.front().layer_index) {
      multi_count = true;
      break;
    }
  }
  for (const SimilarPairReport& r : report.rows) {
    std::ostringstream name;
    name << out_dir << "/similarity_layer" << r.layer_index;
    if (multi_count) name << "_f" << r.n;
    name << "_t" << threshold_tag(r.threshold) << ".csv";
    std::ofstream out(name.str());
    if (!out) throw IoError("cannot open for writing: " + name.str());
    out << "filter_i,filter_j,similarity\n";
    for (const SimilarPair& p : r.pairs) {
      out << p.i << ',' << p.j << ',' << format_g9(p.similarity) << '\n';
    }
  }
}

std::vector<Tensor> activation_maps(const Network& net, const Tensor& image,
                                    std::size_t conv_ordinal) {
  const auto conv_idx = net.conv_layer_indices();
  if (conv_ordinal == 0 || conv_ordinal > conv_idx.size()) {
    throw DomainError("conv layer ordinal " + std::to_string(conv_ordinal) +
                      " out of range 1.." + std::to_string(conv_idx.size()));
  }
  const std::size_t stop = conv_idx[conv_ordinal - 1];

  // Forward in eval mode through the target conv layer, then ReLU.
  Tensor cur = image;
  for (std::size_t i = 0; i <= stop; ++i) {
    const LayerSpec& s = net.layers()[i];
    switch (s.kind) {
      case LayerKind::conv2d:
        cur = conv2d_forward(cur, net.params()[i].weights, net.params()[i].bias);
        break;
      case LayerKind::maxpool2d:
        cur = maxpool2d_forward(cur, s.pool, s.stride, nullptr);
        break;
      case LayerKind::flatten:
        throw DomainError("conv layer unreachable past flatten");
      case LayerKind::dense:
        throw DomainError("conv layer unreachable past dense");
      case LayerKind::relu:
        cur = relu_forward(cur);
        break;
      case LayerKind::dropout:
        break;  // eval mode: identity
      case LayerKind::softmax:
        cur = softmax_forward(cur);
        break;
      case LayerKind::sigmoid:
        cur = sigmoid_forward(cur);
        break;
    }
  }
  cur = relu_forward(cur);

  const std::size_t H = cur.dim(0), W = cur.dim(1), F = cur.dim(2);
  std::vector<Tensor> maps;
  maps.reserve(F);
  for (std::size_t f = 0; f < F; ++f) {
    Tensor m({H, W});
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) m[y * W + x] = cur[(y * W + x) * F + f];
    maps.push_back(std::move(m));
  }
  return maps;
}

Tensor filter_kernel_image(const Tensor& conv_weights, std::size_t filter) {
  const std::size_t kh = conv_weights.dim(0), kw = conv_weights.dim(1);
  const std::size_t C = conv_weights.dim(2), F = conv_weights.dim(3);
  if (filter >= F) throw DomainError("filter index out of range");
  Tensor img({kh, kw});
  for (std::size_t y = 0; y < kh; ++y) {
    for (std::size_t x = 0; x < kw; ++x) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += conv_weights[((y * kw + x) * C + c) * F + filter];
      img[y * kw + x] = s / static_cast<double>(C);
    }
  }
  return img;
}

namespace {

Tensor normalized_unit(const Tensor& t) {
  double lo = t[0], hi = t[0];
  for (std::size_t i = 0; i < t.size(); ++i) {
    lo = std::min(lo, t[i]);
    hi = std::max(hi, t[i]);
  }
  Tensor out(t.shape());
  if (hi == lo) {
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = 0.5;
    return out;
  }
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = (t[i] - lo) / (hi - lo);
  return out;
}

Tensor upscale_tensor(const Tensor& t, std::size_t factor) {
  const std::size_t H = t.dim(0), W = t.dim(1);
  Tensor out({H * factor, W * factor});
  for (std::size_t y = 0; y < H * factor; ++y)
    for (std::size_t x = 0; x < W * factor; ++x) out[y * W * factor + x] = t[(y / factor) * W + x / factor];
  return out;
}

}  // namespace

GrayImage render_filters(const Tensor& conv_weights) {
  const std::size_t F = conv_weights.dim(3);
  std::vector<Tensor> tiles;
  tiles.reserve(F);
  for (std::size_t f = 0; f < F; ++f) {
    tiles.push_back(upscale_tensor(normalized_unit(filter_kernel_image(conv_weights, f)), 8));
  }
  const std::size_t cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(double(F)))));
  const std::size_t rows = (F + cols - 1) / cols;
  return tensor_to_gray(tile_grid(tiles, rows, cols, 1.0));
}

GrayImage render_activations(const Network& net, const Tensor& image, std::size_t conv_ordinal) {
  const std::vector<Tensor> maps = activation_maps(net, image, conv_ordinal);
  std::vector<Tensor> tiles;
  tiles.reserve(maps.size());
  for (const Tensor& m : maps) tiles.push_back(normalized_unit(m));
  const std::size_t cols =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(double(maps.size())))));
  const std::size_t rows = (maps.size() + cols - 1) / cols;
  return tensor_to_gray(tile_grid(tiles, rows, cols, 1.0));
}

bool render_similar_pair(const Network& net, const Tensor& image, std::size_t conv_ordinal,
                         double threshold, bool abs_similarity, GrayImage& out,
                         SimilarPair* pair_out) {
  const auto conv_idx = net.conv_layer_indices();
  if (conv_ordinal == 0 || conv_ordinal > conv_idx.size()) {
    throw DomainError("conv layer ordinal out of range");
  }
  const Tensor& weights = net.params()[conv_idx[conv_ordinal - 1]].weights;
  const SimilarityMatrix m = similarity_matrix(weights, conv_ordinal);
  const SimilarPairReport report =
      similar_pairs(m, threshold, abs_similarity, net.layers()[conv_idx[conv_ordinal - 1]].kernel_h);
  if (report.pairs.empty()) return false;
  const SimilarPair top = report.pairs.front();
  if (pair_out) *pair_out = top;

  const std::vector<Tensor> maps = activation_maps(net, image, conv_ordinal);
  const std::size_t map_h = maps[top.i].dim(0);
  const std::size_t scale = std::max<std::size_t>(1, map_h / weights.dim(0));
  const std::vector<Tensor> tiles = {
      upscale_tensor(normalized_unit(filter_kernel_image(weights, top.i)), scale),
      upscale_tensor(normalized_unit(filter_kernel_image(weights, top.j)), scale),
      normalized_unit(maps[top.i]),
      normalized_unit(maps[top.j]),
  };
  // Kernel tiles and map tiles differ in size; compose manually.
  const std::size_t kw = tiles[0].dim(1), kh = tiles[0].dim(0);
  const std::size_t mw = tiles[2].dim(1), mh = tiles[2].dim(0);
  const std::size_t W = 2 * std::max(kw, mw) + 1;
  const std::size_t H = kh + mh + 1;
  Tensor canvas({H, W});
  for (std::size_t i = 0; i < canvas.size(); ++i) canvas[i] = 1.0;
  const auto blit = [&](const Tensor& tile, std::size_t y0, std::size_t x0) {
    for (std::size_t y = 0; y < tile.dim(0); ++y)
      for (std::size_t x = 0; x < tile.dim(1); ++x)
        canvas[(y0 + y) * W + x0 + x] = tile[y * tile.dim(1) + x];
  };
  const std::size_t cell = std::max(kw, mw) + 1;
  blit(tiles[0], 0, 0);
  blit(tiles[1], 0, cell);
  blit(tiles[2], kh + 1, 0);
  blit(tiles[3], kh + 1, cell);
  out = tensor_to_gray(canvas);
  return true;
}

}  // namespace digitnet
