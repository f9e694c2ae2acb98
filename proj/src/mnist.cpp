#include "digitnet/mnist.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "digitnet/error.hpp"

namespace digitnet {

namespace {

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

char hex_digit(unsigned v) { return "0123456789abcdef"[v & 0xf]; }

std::string hex32(std::uint32_t v) {
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += hex_digit(v >> shift);
  return s;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in, const std::string& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw FormatError("gzip: inflate initialization failed for " + path);
  }
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  do {
    zs.next_out = buf;
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gzip: corrupt stream in " + path);
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

}  // namespace

RawIdx parse_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) {
    throw FormatError("IDX stream too short: " + std::to_string(bytes.size()) + " bytes");
  }
  RawIdx idx;
  idx.magic = read_be32(bytes.data());
  std::size_t ndims = 0;
  if (idx.magic == kIdxImagesMagic) {
    ndims = 3;
  } else if (idx.magic == kIdxLabelsMagic) {
    ndims = 1;
  } else {
    throw FormatError("bad IDX magic " + hex32(idx.magic) + " (expected " + hex32(kIdxImagesMagic) +
                      " or " + hex32(kIdxLabelsMagic) + ")");
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) throw FormatError("IDX header truncated");
  std::size_t expected = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    idx.dims.push_back(read_be32(bytes.data() + 4 + 4 * d));
    expected *= idx.dims.back();
  }
  const std::size_t actual = bytes.size() - header;
  if (actual != expected) {
    throw FormatError("IDX payload length mismatch: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(actual));
  }
  idx.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return idx;
}

std::vector<std::uint8_t> serialize_idx(const RawIdx& idx) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * idx.dims.size() + idx.payload.size());
  write_be32(out, idx.magic);
  for (std::uint32_t d : idx.dims) write_be32(out, d);
  out.insert(out.end(), idx.payload.begin(), idx.payload.end());
  return out;
}

std::vector<std::uint8_t> read_file_maybe_gzip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
    return gunzip(bytes, path);
  }
  return bytes;
}

Tensor one_hot(unsigned label) {
  if (label > 9) {
    throw DomainError("label " + std::to_string(label) + " out of range 0..9");
  }
  Tensor t({10});
  t[label] = 1.0;
  return t;
}

std::vector<std::size_t> Dataset::image_shape() const {
  return {images.dim(1), images.dim(2), images.dim(3)};
}

Tensor Dataset::image(std::size_t i) const {
  if (i >= count()) throw DomainError("image index " + std::to_string(i) + " out of range");
  const std::size_t n = images.dim(1) * images.dim(2) * images.dim(3);
  std::vector<double> vals(images.data() + i * n, images.data() + (i + 1) * n);
  return Tensor({images.dim(1), images.dim(2), images.dim(3)}, std::move(vals));
}

Dataset dataset_from_raw(const RawIdx& images, const RawIdx& labels) {
  if (images.magic != kIdxImagesMagic) {
    throw FormatError("expected an IDX image file, magic was " + hex32(images.magic));
  }
  if (labels.magic != kIdxLabelsMagic) {
    throw FormatError("expected an IDX label file, magic was " + hex32(labels.magic));
  }
  const std::size_t n = images.dims[0];
  if (labels.dims[0] != n) {
    throw FormatError("image/label counts disagree: " + std::to_string(n) + " vs " +
                      std::to_string(labels.dims[0]));
  }
  const std::size_t H = images.dims[1], W = images.dims[2];
  Dataset ds;
  ds.images = Tensor({n, H, W, 1});
  for (std::size_t i = 0; i < images.payload.size(); ++i) {
    ds.images[i] = normalize_pixel(images.payload[i]);
  }
  ds.labels.assign(labels.payload.begin(), labels.payload.end());
  ds.onehot = Tensor({n, 10});
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.labels[i] > 9) {
      throw FormatError("label " + std::to_string(int(ds.labels[i])) + " at sample " +
                        std::to_string(i) + " out of range 0..9");
    }
    ds.onehot[i * 10 + ds.labels[i]] = 1.0;
  }
  return ds;
}

Dataset load_dataset(const std::string& images_path, const std::string& labels_path) {
  return dataset_from_raw(parse_idx(read_file_maybe_gzip(images_path)),
                          parse_idx(read_file_maybe_gzip(labels_path)));
}

Dataset dataset_head(const Dataset& ds, std::size_t n) {
  if (n == 0) throw ConfigError("subset size must be positive");
  if (n > ds.count()) {
    throw ConfigError("subset size " + std::to_string(n) + " exceeds dataset size " +
                      std::to_string(ds.count()));
  }
  const std::size_t H = ds.images.dim(1), W = ds.images.dim(2);
  Dataset out;
  out.images = Tensor({n, H, W, 1},
                      std::vector<double>(ds.images.data(), ds.images.data() + n * H * W));
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n));
  out.onehot =
      Tensor({n, 10}, std::vector<double>(ds.onehot.data(), ds.onehot.data() + n * 10));
  return out;
}

BatchPlan BatchPlan::make(std::size_t n, std::size_t batch_size, SeededRng& rng, bool drop_last) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  BatchPlan plan;
  plan.batch_size = batch_size;
  plan.order = rng.permutation(n);
  plan.drop_last = drop_last;
  return plan;
}

BatchPlan BatchPlan::sequential(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  BatchPlan plan;
  plan.batch_size = batch_size;
  plan.order.resize(n);
  for (std::size_t i = 0; i < n; ++i) plan.order[i] = i;
  return plan;
}

std::size_t BatchPlan::batch_count() const {
  const std::size_t n = order.size();
  if (drop_last) return n / batch_size;
  return (n + batch_size - 1) / batch_size;
}

Batch make_batch(const Dataset& ds, const BatchPlan& plan, std::size_t batch_index) {
  if (batch_index >= plan.batch_count()) {
    throw DomainError("batch index " + std::to_string(batch_index) + " out of range");
  }
  const std::size_t begin = batch_index * plan.batch_size;
  const std::size_t end = std::min(begin + plan.batch_size, plan.order.size());
  const std::size_t b = end - begin;
  const std::size_t H = ds.images.dim(1), W = ds.images.dim(2);
  const std::size_t px = H * W;

  Batch batch;
  batch.images = Tensor({b, H, W, 1});
  batch.onehot = Tensor({b, 10});
  batch.labels.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t src = plan.order[begin + i];
    std::memcpy(batch.images.data() + i * px, ds.images.data() + src * px, px * sizeof(double));
    std::memcpy(batch.onehot.data() + i * 10, ds.onehot.data() + src * 10, 10 * sizeof(double));
    batch.labels[i] = ds.labels[src];
  }
  return batch;
}

}  // namespace digitnet
