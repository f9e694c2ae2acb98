#include "digitnet/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "digitnet/parallel.hpp"

namespace digitnet {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (checked_product(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(new_shape));
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) && {
  if (checked_product(new_shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str() + " to " + shape_to_string(new_shape) +
                     ": element counts differ");
  }
  Tensor out;
  out.shape_ = std::move(new_shape);
  out.data_ = std::move(data_);
  shape_.clear();
  return out;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace mat {
namespace {

#define DIGITNET_MM_VARIANT baseline
#include "mm_rows.inc"
#undef DIGITNET_MM_VARIANT

#if defined(__x86_64__) && defined(__GNUC__)
#define DIGITNET_HAVE_AVX2_VARIANT 1
#pragma GCC push_options
#pragma GCC target("avx2,fma")
#define DIGITNET_MM_VARIANT avx2_fma
#include "mm_rows.inc"
#undef DIGITNET_MM_VARIANT
#pragma GCC pop_options
#endif

using NnFn = void (*)(const double*, const double*, double*, std::size_t, std::size_t,
                      std::size_t, std::size_t);
using TnFn = void (*)(const double*, const double*, double*, std::size_t, std::size_t,
                      std::size_t, std::size_t, std::size_t);

struct Kernels {
  NnFn nn = baseline::nn_rows;
  NnFn nt = baseline::nt_rows;
  TnFn tn = baseline::tn_rows;
};

const Kernels& kernels() {
  static const Kernels k = [] {
    Kernels out;
#ifdef DIGITNET_HAVE_AVX2_VARIANT
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
      out.nn = avx2_fma::nn_rows;
      out.nt = avx2_fma::nt_rows;
      out.tn = avx2_fma::tn_rows;
    }
#endif
    return out;
  }();
  return k;
}

}  // namespace

void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const NnFn fn = kernels().nn;
  parallel_for(m, [=](std::size_t i0, std::size_t i1) { fn(a, b, c, k, n, i0, i1); });
}

void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const NnFn fn = kernels().nt;
  parallel_for(m, [=](std::size_t i0, std::size_t i1) { fn(a, b, c, k, n, i0, i1); });
}

void mm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const TnFn fn = kernels().tn;
  parallel_for(m, [=](std::size_t t0, std::size_t t1) { fn(a, b, c, m, k, n, t0, t1); });
}

}  // namespace mat

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + a.shape_str() + " and " + b.shape_str());
  }
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree: " + a.shape_str() + " x " + b.shape_str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  mat::mm_nn(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects a rank-2 tensor, got " + a.shape_str());
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at2(j, i) = a.at2(i, j);
  return t;
}

namespace {

template <class Op>
Tensor zip(const Tensor& a, const Tensor& b, const char* name, Op op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(name) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) po[i] = op(pa[i], pb[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

std::size_t argmax(const Tensor& v) {
  if (v.rank() != 1) throw ShapeError("argmax expects a rank-1 tensor, got " + v.shape_str());
  if (v.size() == 0) throw DomainError("argmax of an empty tensor is undefined");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

namespace {

inline std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& w : state_.words) w = splitmix64(sm);
}

std::uint64_t SeededRng::next_u64() {
  auto& s = state_.words;
  const std::uint64_t result = rotl64(s[1] * 5, 7) * 9;
  const std::uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl64(s[3], 45);
  return result;
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
  if (state_.has_spare) {
    state_.has_spare = false;
    return state_.spare;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  state_.spare = v * f;
  state_.has_spare = true;
  return u * f;
}

std::vector<std::size_t> SeededRng::permutation(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index) {
  std::uint64_t x = base ^ fnv1a64(label) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(x);
}

}  // namespace digitnet
