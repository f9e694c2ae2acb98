#ifndef DIGITNET_TENSOR_HPP
#define DIGITNET_TENSOR_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "digitnet/error.hpp"

namespace digitnet {

/// Dense n-dimensional array of 64-bit reals, row-major.
/// The shape is fixed at construction; reshaped() returns a new value
/// with the same element count.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  Tensor reshaped(std::vector<std::size_t> new_shape) const&;
  Tensor reshaped(std::vector<std::size_t> new_shape) &&;

  std::string shape_str() const;

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

/// c[i][j] = sum_t a[i][t] * b[t][j]; both operands rank-2.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Rank-2 transpose.
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(const Tensor& a, double s);

/// Smallest index attaining the maximum of a rank-1 tensor.
std::size_t argmax(const Tensor& v);

// Raw matrix kernels used by the layer implementations. All of them write
// each output cell from a single sequential inner loop, so results are
// bitwise independent of the thread count.
namespace mat {
// c[m x n] = a[m x k] * b[k x n]
void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a[m x k] * b[n x k]^T
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a[k x m]^T * b[k x n]
void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
}  // namespace mat

/// Deterministic seeded generator (xoshiro256** seeded via splitmix64,
/// reimplemented from the public reference descriptions). The integer and
/// uniform streams are bit-exact across platforms; normal() additionally
/// depends on the platform's log/sqrt rounding.
class SeededRng {
public:
  struct State {
    std::array<std::uint64_t, 4> words{};
    bool has_spare = false;
    double spare = 0.0;
  };

  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1), 53 random bits.
  double uniform();
  /// Standard normal via the Marsaglia polar method.
  double normal();

  State state() const { return state_; }
  void restore(const State& s) { state_ = s; }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

private:
  State state_;
};

/// Sub-seed for a named purpose so all randomness flows from one base seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index = 0);

}  // namespace digitnet

#endif
