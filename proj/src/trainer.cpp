#include "digitnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "digitnet/image.hpp"

namespace digitnet {

std::vector<LayerSpec> default_architecture(std::size_t conv1_filters, std::size_t conv2_filters,
                                            double dropout_conv, double dropout_dense) {
  std::vector<LayerSpec> arch;
  arch.push_back(LayerSpec::Conv2d(3, 1, conv1_filters));
  arch.push_back(LayerSpec::Relu());
  arch.push_back(LayerSpec::Conv2d(5, conv1_filters, conv2_filters));
  arch.push_back(LayerSpec::Relu());
  arch.push_back(LayerSpec::MaxPool2d());
  if (dropout_conv > 0.0) arch.push_back(LayerSpec::Dropout(dropout_conv));
  arch.push_back(LayerSpec::Flatten());
  arch.push_back(LayerSpec::Dense(121 * conv2_filters, 128));
  arch.push_back(LayerSpec::Relu());
  if (dropout_dense > 0.0) arch.push_back(LayerSpec::Dropout(dropout_dense));
  arch.push_back(LayerSpec::Dense(128, 50));
  arch.push_back(LayerSpec::Relu());
  if (dropout_dense > 0.0) arch.push_back(LayerSpec::Dropout(dropout_dense));
  arch.push_back(LayerSpec::Dense(50, 10));
  arch.push_back(LayerSpec::Softmax());
  return arch;
}

namespace {

void validate_config(const TrainingConfig& cfg, const Dataset& train_set) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(cfg.epochs));
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  validate(cfg.sgd);
  if (cfg.limit_train && (*cfg.limit_train == 0 || *cfg.limit_train > train_set.count())) {
    throw ConfigError("limit_train " + std::to_string(*cfg.limit_train) +
                      " outside 1.." + std::to_string(train_set.count()));
  }
}

std::size_t count_correct(const Tensor& probs, const std::vector<std::uint8_t>& labels) {
  const std::size_t n = probs.dim(1);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const double* row = probs.data() + b * n;
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (row[i] > row[best]) best = i;
    }
    if (best == labels[b]) ++correct;
  }
  return correct;
}

}  // namespace

TrainerSession make_session_from_arch(const std::vector<LayerSpec>& arch, std::uint64_t seed) {
  SeededRng init_rng(derive_seed(seed, "init"));
  TrainerSession session;
  session.net = Network::build(arch, init_rng);
  session.opt = OptimizerState::for_params(session.net.param_tensors());
  session.base_seed = seed;
  session.rng_state = init_rng.state();
  session.epochs_done = 0;
  return session;
}

TrainerSession make_session(const TrainingConfig& cfg, const Dataset& train_set) {
  validate_config(cfg, train_set);
  TrainerSession session = make_session_from_arch(
      cfg.architecture.empty() ? default_architecture() : cfg.architecture, cfg.seed);
  // Composition check against the data, before any training happens.
  session.net.shape_chain(train_set.image_shape());
  return session;
}

std::vector<EpochMetrics> run_training(TrainerSession& session, const TrainingConfig& cfg,
                                       const Dataset& train_set, const Dataset* eval_set,
                                       const EpochCallback& cb) {
  validate_config(cfg, train_set);
  if (cfg.limit_eval && eval_set &&
      (*cfg.limit_eval == 0 || *cfg.limit_eval > eval_set->count())) {
    throw ConfigError("limit_eval " + std::to_string(*cfg.limit_eval) + " outside 1.." +
                      std::to_string(eval_set->count()));
  }
  Dataset train_storage;
  const Dataset* train = &train_set;
  if (cfg.limit_train && *cfg.limit_train < train_set.count()) {
    train_storage = dataset_head(train_set, *cfg.limit_train);
    train = &train_storage;
  }
  Dataset eval_storage;
  const Dataset* eval = eval_set;
  if (eval_set && cfg.limit_eval && *cfg.limit_eval < eval_set->count()) {
    eval_storage = dataset_head(*eval_set, *cfg.limit_eval);
    eval = &eval_storage;
  }
  session.net.shape_chain(train->image_shape());

  std::vector<EpochMetrics> metrics;
  const auto params = session.net.param_tensors();
  const auto grads = session.net.grad_tensors();

  for (int epoch = session.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    SeededRng shuffle_rng(derive_seed(session.base_seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    SeededRng dropout_rng(derive_seed(session.base_seed, "dropout", static_cast<std::uint64_t>(epoch)));
    const BatchPlan plan = BatchPlan::make(train->count(), cfg.batch_size, shuffle_rng);

    session.net.set_mode(Mode::train);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t bi = 0; bi < plan.batch_count(); ++bi) {
      const Batch batch = make_batch(*train, plan, bi);
      const std::size_t b = batch.labels.size();
      ForwardCache cache;
      const Tensor probs = session.net.forward(batch.images, &cache, &dropout_rng);
      loss_sum += categorical_crossentropy(probs, batch.onehot) * static_cast<double>(b);
      correct += count_correct(probs, batch.labels);
      // d(mean CE)/d(logits) = (softmax - target) / batch
      Tensor grad = scale(sub(probs, batch.onehot), 1.0 / static_cast<double>(b));
      session.net.backward(cache, std::move(grad), /*from_logits=*/true);
      sgd_step(params, grads, session.opt, cfg.sgd);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(train->count());
    em.train_acc = static_cast<double>(correct) / static_cast<double>(train->count());
    if (eval) {
      const auto [vl, va] = evaluate(session.net, *eval);
      em.val_loss = vl;
      em.val_acc = va;
    }
    em.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    session.epochs_done = epoch;
    metrics.push_back(em);
    if (cb) cb(em);
  }
  return metrics;
}

TrainResult train(const TrainingConfig& cfg, const Dataset& train_set, const Dataset* eval_set,
                  const EpochCallback& cb) {
  TrainResult result;
  result.session = make_session(cfg, train_set);
  result.metrics = run_training(result.session, cfg, train_set, eval_set, cb);
  return result;
}

std::pair<double, double> evaluate(const Network& net, const Dataset& ds, std::size_t batch_size) {
  if (ds.count() == 0) throw DomainError("cannot evaluate on an empty dataset");
  const BatchPlan plan = BatchPlan::sequential(ds.count(), batch_size);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t bi = 0; bi < plan.batch_count(); ++bi) {
    const Batch batch = make_batch(ds, plan, bi);
    const Tensor probs = net.infer(batch.images);
    loss_sum += categorical_crossentropy(probs, batch.onehot) *
                static_cast<double>(batch.labels.size());
    correct += count_correct(probs, batch.labels);
  }
  return {loss_sum / static_cast<double>(ds.count()),
          static_cast<double>(correct) / static_cast<double>(ds.count())};
}

// ---- checkpoints --------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'D', 'G', 'N', 'C', 'K', 'P', 'T', '1'};

class ByteWriter {
public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
  }

private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
public:
  ByteReader(const std::uint8_t* data, std::size_t n) : data_(data), size_(n) {}
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) +
                        " while reading " + what);
    }
  }
  void raw(void* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, data_ + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return data_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  Tensor tensor(const char* what) {
    const std::uint32_t rank = u32(what);
    if (rank > 8) {
      throw FormatError(std::string("checkpoint: implausible tensor rank ") +
                        std::to_string(rank) + " in " + what + " at byte " +
                        std::to_string(pos_ - 4));
    }
    std::vector<std::size_t> shape;
    std::size_t n = rank == 0 ? 0 : 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = u64(what);
      if (dim == 0 || dim > (1ULL << 32)) {
        throw FormatError(std::string("checkpoint: bad tensor dimension in ") + what);
      }
      shape.push_back(static_cast<std::size_t>(dim));
      n *= static_cast<std::size_t>(dim);
      if (n > (1ULL << 31)) {
        throw FormatError(std::string("checkpoint: implausible tensor size in ") + what);
      }
    }
    need(n * 8, what);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = f64(what);
    if (rank == 0) return Tensor{};
    return Tensor(std::move(shape), std::move(values));
  }

private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_spec(ByteWriter& w, const LayerSpec& s) {
  w.u8(static_cast<std::uint8_t>(s.kind));
  switch (s.kind) {
    case LayerKind::conv2d:
      w.u32(static_cast<std::uint32_t>(s.kernel_h));
      w.u32(static_cast<std::uint32_t>(s.kernel_w));
      w.u32(static_cast<std::uint32_t>(s.in_channels));
      w.u32(static_cast<std::uint32_t>(s.filters));
      break;
    case LayerKind::maxpool2d:
      w.u32(static_cast<std::uint32_t>(s.pool));
      w.u32(static_cast<std::uint32_t>(s.stride));
      break;
    case LayerKind::dense:
      w.u32(static_cast<std::uint32_t>(s.in_width));
      w.u32(static_cast<std::uint32_t>(s.out_width));
      break;
    case LayerKind::dropout:
      w.f64(s.rate);
      break;
    default:
      break;
  }
}

LayerSpec read_spec(ByteReader& r) {
  const std::uint8_t kind = r.u8("layer kind");
  if (kind > static_cast<std::uint8_t>(LayerKind::sigmoid)) {
    throw FormatError("checkpoint: unknown layer kind " + std::to_string(int(kind)) +
                      " at byte " + std::to_string(r.offset() - 1));
  }
  LayerSpec s;
  s.kind = static_cast<LayerKind>(kind);
  switch (s.kind) {
    case LayerKind::conv2d:
      s.kernel_h = r.u32("conv kernel_h");
      s.kernel_w = r.u32("conv kernel_w");
      s.in_channels = r.u32("conv in_channels");
      s.filters = r.u32("conv filters");
      break;
    case LayerKind::maxpool2d:
      s.pool = r.u32("pool size");
      s.stride = r.u32("pool stride");
      break;
    case LayerKind::dense:
      s.in_width = r.u32("dense in_width");
      s.out_width = r.u32("dense out_width");
      break;
    case LayerKind::dropout:
      s.rate = r.f64("dropout rate");
      break;
    default:
      break;
  }
  return s;
}

}  // namespace

Checkpoint checkpoint_from_session(const TrainerSession& session) {
  Checkpoint ckpt;
  ckpt.architecture = session.net.layers();
  ckpt.params = session.net.params();
  ckpt.opt = session.opt;
  ckpt.base_seed = session.base_seed;
  ckpt.rng_state = session.rng_state;
  ckpt.epoch = session.epochs_done;
  return ckpt;
}

TrainerSession session_from_checkpoint(const Checkpoint& ckpt) {
  TrainerSession session;
  session.net = Network::from_parts(ckpt.architecture, ckpt.params);
  session.opt = ckpt.opt;
  const auto params = session.net.param_tensors();
  if (session.opt.velocity.size() != params.size()) {
    throw FormatError("checkpoint: optimizer state does not match architecture");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!session.opt.velocity[i].same_shape(*params[i])) {
      throw FormatError("checkpoint: velocity shape mismatch at parameter " + std::to_string(i));
    }
  }
  session.base_seed = ckpt.base_seed;
  session.rng_state = ckpt.rng_state;
  session.epochs_done = ckpt.epoch;
  return session;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<std::uint8_t> bytes;
  ByteWriter w(bytes);
  w.raw(kCkptMagic, sizeof(kCkptMagic));
  w.u32(ckpt.format_version);
  w.u64(ckpt.base_seed);
  w.u32(static_cast<std::uint32_t>(ckpt.epoch));
  for (std::uint64_t word : ckpt.rng_state.words) w.u64(word);
  w.u8(ckpt.rng_state.has_spare ? 1 : 0);
  w.f64(ckpt.rng_state.spare);
  w.u64(ckpt.opt.iteration);
  w.u32(static_cast<std::uint32_t>(ckpt.architecture.size()));
  for (const LayerSpec& s : ckpt.architecture) write_spec(w, s);
  if (ckpt.params.size() != ckpt.architecture.size()) {
    throw ShapeError("checkpoint: params/architecture size mismatch");
  }
  for (const LayerParams& p : ckpt.params) {
    w.tensor(p.weights);
    w.tensor(p.bias);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.opt.velocity.size()));
  for (const Tensor& v : ckpt.opt.velocity) w.tensor(v);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  ByteReader r(bytes.data(), bytes.size());

  char magic[8];
  r.raw(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  Checkpoint ckpt;
  ckpt.format_version = r.u32("format version");
  if (ckpt.format_version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.format_version) +
                      " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  ckpt.base_seed = r.u64("base seed");
  ckpt.epoch = static_cast<int>(r.u32("epoch"));
  for (std::uint64_t& word : ckpt.rng_state.words) word = r.u64("rng state");
  ckpt.rng_state.has_spare = r.u8("rng spare flag") != 0;
  ckpt.rng_state.spare = r.f64("rng spare");
  ckpt.opt.iteration = r.u64("optimizer iteration");
  const std::uint32_t layer_count = r.u32("layer count");
  if (layer_count > 1024) throw FormatError("checkpoint: implausible layer count");
  for (std::uint32_t i = 0; i < layer_count; ++i) ckpt.architecture.push_back(read_spec(r));
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerParams p;
    p.weights = r.tensor("layer weights");
    p.bias = r.tensor("layer bias");
    ckpt.params.push_back(std::move(p));
  }
  const std::uint32_t vel_count = r.u32("velocity count");
  if (vel_count > 4096) throw FormatError("checkpoint: implausible velocity count");
  for (std::uint32_t i = 0; i < vel_count; ++i) {
    ckpt.opt.velocity.push_back(r.tensor("velocity"));
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint has " + std::to_string(r.remaining()) +
                      " trailing bytes after byte " + std::to_string(r.offset()));
  }
  return ckpt;
}

// ---- metrics export -----------------------------------------------------

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void export_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path,
                        bool zero_wall) {
  if (metrics.empty()) throw DomainError("no metrics to export");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds\n";
  for (const EpochMetrics& m : metrics) {
    out << m.epoch << ',' << format_g9(m.train_loss) << ',' << format_g9(m.train_acc) << ','
        << format_g9(m.val_loss) << ',' << format_g9(m.val_acc) << ','
        << format_g9(zero_wall ? 0.0 : m.wall_seconds) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<EpochMetrics> parse_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty metrics CSV: " + path);
  if (line != "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds") {
    throw FormatError("unexpected metrics CSV header: " + line);
  }
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochMetrics m;
    std::istringstream ss(line);
    char comma;
    ss >> m.epoch >> comma >> m.train_loss >> comma >> m.train_acc >> comma >> m.val_loss >>
        comma >> m.val_acc >> comma >> m.wall_seconds;
    if (ss.fail()) throw FormatError("malformed metrics row: " + line);
    out.push_back(m);
  }
  return out;
}

void plot_metrics(const std::vector<EpochMetrics>& metrics, const std::string& out_dir) {
  if (metrics.empty()) throw DomainError("no metrics to plot");
  std::vector<double> tl, ta, vl, va;
  for (const EpochMetrics& m : metrics) {
    tl.push_back(m.train_loss);
    ta.push_back(m.train_acc);
    vl.push_back(m.val_loss);
    va.push_back(m.val_acc);
  }
  write_pgm(render_chart({{"train_loss", tl, 0}, {"val_loss", vl, 150}}),
            out_dir + "/loss.pgm");
  write_pgm(render_chart({{"train_acc", ta, 0}, {"val_acc", va, 150}}),
            out_dir + "/accuracy.pgm");
}

}  // namespace digitnet
