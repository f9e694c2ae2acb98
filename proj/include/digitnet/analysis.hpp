#ifndef DIGITNET_ANALYSIS_HPP
#define DIGITNET_ANALYSIS_HPP

#include <string>
#include <vector>

#include "digitnet/image.hpp"
#include "digitnet/layers.hpp"
#include "digitnet/mnist.hpp"
#include "digitnet/trainer.hpp"

namespace digitnet {

/// (a.b)/(|a||b|) over flattened elements. Throws DomainError when either
/// norm is below 1e-12.
double cosine_similarity(const Tensor& a, const Tensor& b);

inline constexpr double kZeroNormThreshold = 1e-12;

struct SimilarityMatrix {
  std::size_t layer_index = 0;  // 1-based conv ordinal
  std::size_t n = 0;
  std::vector<double> values;  // n*n, symmetric, unit diagonal
  std::size_t skipped = 0;     // pairs skipped for zero-norm filters

  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

/// Pairwise cosine over whole filters (all input channels flattened into
/// one k*k*C vector per filter); bias excluded. Zero-norm filters keep a
/// unit diagonal, their off-diagonal entries are 0 and counted in skipped.
SimilarityMatrix similarity_matrix(const Tensor& conv_weights, std::size_t layer_index = 1);

struct SimilarPair {
  std::size_t i = 0, j = 0;  // i < j
  double similarity = 0.0;
};

struct SimilarPairReport {
  std::size_t layer_index = 0;  // 1-based conv ordinal
  std::size_t kernel = 0;
  std::size_t n = 0;
  double threshold = 0.0;
  std::vector<SimilarPair> pairs;  // sorted by descending similarity
  std::size_t total_pairs = 0;     // C(n,2)
  double ratio = 0.0;
  std::size_t skipped = 0;
};

/// Pairs with similarity >= threshold (|similarity| with abs_similarity).
/// threshold must lie in (-1, 1].
SimilarPairReport similar_pairs(const SimilarityMatrix& matrix, double threshold,
                                bool abs_similarity = false, std::size_t kernel = 0);

struct AnalysisReport {
  std::vector<SimilarPairReport> rows;
};

/// One report row per (conv layer, threshold) of the given network.
AnalysisReport analyze_network(const Network& net, const std::vector<double>& thresholds,
                               bool abs_similarity = false);

struct SweepConfig {
  std::vector<std::size_t> filter_counts{32, 64, 128, 256};
  std::vector<double> thresholds{0.5, 0.6};
  bool abs_similarity = false;
  int epochs = 1;
  std::size_t batch_size = 128;
  SgdConfig sgd;
  std::optional<std::size_t> limit_train;
  std::uint64_t seed = 42;
};

/// Trains one default-architecture network per filter count (both conv
/// layers set to n, desk-scale caps applied) and reports every
/// (layer, count, threshold) combination.
AnalysisReport sweep(const SweepConfig& cfg, const Dataset& train_set);

/// Summary CSV: layer,kernel,filters,threshold,pair_count,total_pairs,ratio.
void write_report_csv(const AnalysisReport& report, const std::string& path);

/// Per-row pair listings: similarity_layer{i}_t{theta}.csv, or
/// similarity_layer{i}_f{n}_t{theta}.csv when rows span several filter
/// counts. Schema: filter_i,filter_j,similarity.
void write_report_details(const AnalysisReport& report, const std::string& out_dir);

/// Post-ReLU response of each filter of the conv layer with 1-based
/// ordinal conv_ordinal to one input image; one [h,w] map per filter.
std::vector<Tensor> activation_maps(const Network& net, const Tensor& image,
                                    std::size_t conv_ordinal);

/// Channel-mean k x k kernel of one filter as a rank-2 tensor.
Tensor filter_kernel_image(const Tensor& conv_weights, std::size_t filter);

/// Grid of all filter kernels of a conv layer (channel-mean, upscaled x8).
GrayImage render_filters(const Tensor& conv_weights);

/// Grid of all activation maps of a conv layer for one image.
GrayImage render_activations(const Network& net, const Tensor& image, std::size_t conv_ordinal);

/// Side-by-side visualization of the most similar pair at or above the
/// threshold: both kernels (upscaled) above both activation maps.
/// Returns false when no pair reaches the threshold.
bool render_similar_pair(const Network& net, const Tensor& image, std::size_t conv_ordinal,
                         double threshold, bool abs_similarity, GrayImage& out,
                         SimilarPair* pair_out = nullptr);

}  // namespace digitnet

#endif
