#ifndef DIGITNET_MNIST_HPP
#define DIGITNET_MNIST_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "digitnet/tensor.hpp"

namespace digitnet {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct RawIdx {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

/// Decodes the big-endian IDX header and validates the payload length.
RawIdx parse_idx(const std::vector<std::uint8_t>& bytes);

/// Inverse of parse_idx for valid inputs.
std::vector<std::uint8_t> serialize_idx(const RawIdx& idx);

/// Whole-file read; gzip streams (1f 8b signature) are inflated.
std::vector<std::uint8_t> read_file_maybe_gzip(const std::string& path);

inline double normalize_pixel(std::uint8_t v) { return static_cast<double>(v) / 255.0; }

/// Unit vector of width 10 with a 1 at the label index.
Tensor one_hot(unsigned label);

struct Dataset {
  Tensor images;                     // [N,H,W,1], values in [0,1]
  std::vector<std::uint8_t> labels;  // 0..9
  Tensor onehot;                     // [N,10]

  std::size_t count() const { return labels.size(); }
  std::vector<std::size_t> image_shape() const;  // [H,W,1]
  /// One image as [H,W,1].
  Tensor image(std::size_t i) const;
};

Dataset dataset_from_raw(const RawIdx& images, const RawIdx& labels);
Dataset load_dataset(const std::string& images_path, const std::string& labels_path);
/// First n samples.
Dataset dataset_head(const Dataset& ds, std::size_t n);

struct BatchPlan {
  std::size_t batch_size = 128;
  std::vector<std::size_t> order;  // permutation of [0,N)
  bool drop_last = false;

  static BatchPlan make(std::size_t n, std::size_t batch_size, SeededRng& rng,
                        bool drop_last = false);
  /// Identity order (evaluation).
  static BatchPlan sequential(std::size_t n, std::size_t batch_size);

  std::size_t batch_count() const;
};

struct Batch {
  Tensor images;  // [b,H,W,1]
  Tensor onehot;  // [b,10]
  std::vector<std::uint8_t> labels;
};

Batch make_batch(const Dataset& ds, const BatchPlan& plan, std::size_t batch_index);

}  // namespace digitnet

#endif
