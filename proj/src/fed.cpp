#include "pghash/fed.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "pghash/rng.hpp"

namespace pghash {

namespace {

// Seed-stream tags.
constexpr std::uint64_t kStreamShuffle = 0x51;
constexpr std::uint64_t kStreamDevice = 0xD0;
constexpr std::uint64_t kStreamBatch = 0xB0;
constexpr std::uint64_t kStreamLsh = 0xE0;
constexpr std::uint64_t kStreamCoords = 0xF0;
constexpr std::uint64_t kStreamInjectTrim = 0xC0;
constexpr std::uint64_t kStreamSoftmax = 0xA0;
constexpr std::uint64_t kStreamEval = 0xEE;

bool is_pruned(Method m) { return m != Method::Dense; }
bool uses_lsh(Method m) {
  return m == Method::PGHash || m == Method::PGHashD ||
         m == Method::SlideSimHash || m == Method::SlideDwta;
}
bool holds_full_layer(Method m) {
  return m == Method::Dense || m == Method::SlideSimHash ||
         m == Method::SlideDwta;
}

std::uint64_t device_stream_seed(const FedConfig& cfg, int device) {
  return derive_seed(cfg.seed, kStreamDevice, static_cast<std::uint64_t>(device));
}

std::vector<SparseExample> draw_batch(const std::vector<SparseExample>& shard,
                                      int batch_size, std::uint64_t device_seed,
                                      long round) {
  std::vector<SparseExample> out;
  if (shard.empty()) return out;
  const Index n = static_cast<Index>(shard.size());
  const Index m = std::min<Index>(batch_size, n);
  auto rng = make_engine(device_seed,
                         derive_seed(kStreamBatch, static_cast<std::uint64_t>(round)));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  for (Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(pick(rng))]);
    out.push_back(shard[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  }
  return out;
}

void format_double(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::Dense:
      return "dense";
    case Method::PGHash:
      return "pghash";
    case Method::PGHashD:
      return "pghash-d";
    case Method::SlideSimHash:
      return "slide-simhash";
    case Method::SlideDwta:
      return "slide-dwta";
    default:
      return "sampled-softmax";
  }
}

std::optional<Method> method_from_string(const std::string& name) {
  if (name == "dense") return Method::Dense;
  if (name == "pghash") return Method::PGHash;
  if (name == "pghash-d" || name == "pghashd") return Method::PGHashD;
  if (name == "slide-simhash") return Method::SlideSimHash;
  if (name == "slide-dwta") return Method::SlideDwta;
  if (name == "sampled-softmax") return Method::SampledSoftmax;
  return std::nullopt;
}

void Ledger::write_csv(std::ostream& out) const {
  out << "round,method,device_count,bytes_down,bytes_up,avg_active_frac,loss,"
         "p_at_1\n";
  for (const auto& r : rows) {
    out << r.round << ',' << to_string(r.method) << ',' << r.device_count << ','
        << r.bytes_down << ',' << r.bytes_up << ',';
    format_double(out, r.avg_active_frac);
    out << ',';
    if (r.has_loss) format_double(out, r.loss);
    out << ',';
    if (r.has_p_at_1) format_double(out, r.p_at_1);
    out << '\n';
  }
}

std::vector<Dataset> partition_iid(const Dataset& dataset, int num_shards,
                                   std::uint64_t seed) {
  if (num_shards < 1)
    throw std::invalid_argument("partition_iid: need at least one shard");
  if (dataset.examples.size() < static_cast<std::size_t>(num_shards))
    throw std::invalid_argument("partition_iid: fewer examples than shards");
  std::vector<std::size_t> order(dataset.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_engine(seed, kStreamShuffle);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t total = order.size();
  const std::size_t base = total / static_cast<std::size_t>(num_shards);
  const std::size_t extra = total % static_cast<std::size_t>(num_shards);
  std::vector<Dataset> shards;
  std::size_t cursor = 0;
  for (int s = 0; s < num_shards; ++s) {
    const std::size_t take = base + (static_cast<std::size_t>(s) < extra ? 1 : 0);
    Dataset shard;
    shard.meta = dataset.meta;
    shard.meta.num_points = static_cast<Index>(take);
    for (std::size_t i = 0; i < take; ++i)
      shard.examples.push_back(dataset.examples[order[cursor + i]]);
    cursor += take;
    shards.push_back(std::move(shard));
  }
  return shards;
}

DeviceLshResult device_lsh_analysis(const Eigen::Ref<const Matrix>& hidden,
                                    const Eigen::Ref<const Matrix>& sketch,
                                    const FoldingOperator& fold_op,
                                    const FedConfig& cfg,
                                    std::uint64_t function_seed) {
  if (!uses_lsh(cfg.method))
    throw std::invalid_argument("device_lsh_analysis: not an LSH method");
  if (fold_op.input_dim() != hidden.rows())
    throw std::invalid_argument("device_lsh_analysis: fold/hidden dim mismatch");
  if (fold_op.sketch_dim() > hidden.rows())
    throw std::invalid_argument("device_lsh_analysis: sketch dim exceeds hidden dim");
  if (sketch.rows() != fold_op.sketch_dim())
    throw std::invalid_argument("device_lsh_analysis: sketch height mismatch");

  DeviceLshResult result;
  const Index n = sketch.cols();
  for (int t = 0; t < cfg.num_tables; ++t) {
    const std::uint64_t fs = derive_seed(function_seed, static_cast<std::uint64_t>(t));
    switch (cfg.method) {
      case Method::PGHash:
        result.functions.push_back(
            HashFunction::pghash(cfg.hash_length, fold_op.sketch_dim(), fs));
        break;
      case Method::PGHashD:
        result.functions.push_back(HashFunction::pghash_d(
            cfg.hash_length, fold_op.sketch_dim(), fs, cfg.wta_rule));
        break;
      case Method::SlideSimHash:
        result.functions.push_back(
            HashFunction::simhash(cfg.hash_length, hidden.rows(), fs));
        break;
      default:
        result.functions.push_back(HashFunction::dwta(
            cfg.hash_length, hidden.rows(), fs, cfg.wta_rule));
        break;
    }
    result.tables.push_back(build_table(result.functions.back(), sketch));
  }

  const bool folded =
      cfg.method == Method::PGHash || cfg.method == Method::PGHashD;
  result.batch_codes.resize(result.tables.size());
  for (Index m = 0; m < hidden.cols(); ++m) {
    const Vector view = folded ? fold_op.apply(hidden.col(m)) : Vector(hidden.col(m));
    for (std::size_t t = 0; t < result.functions.size(); ++t)
      result.batch_codes[t].push_back(result.functions[t].code(view));
  }

  SamplingConfig sampling;
  sampling.compression_ratio = cfg.compression_ratio;
  sampling.num_tables = cfg.num_tables;
  sampling.strategy = cfg.strategy;
  sampling.top_k = cfg.top_k;
  sampling.hamming_threshold = cfg.hamming_threshold;
  sampling.seed = derive_seed(function_seed, 0x7777);
  result.theta = sampling.strategy == SamplingStrategy::Vanilla
                     ? vanilla_sample(result.batch_codes, result.tables, sampling, n)
                     : hamming_sample(result.batch_codes, result.tables, sampling, n);
  return result;
}

// ---------------------------------------------------------------------------

struct Simulator::Impl {
  FedConfig cfg;
  Network server{1, 1, 1, 0};
  Dataset test;
  std::vector<SparseExample> eval_batch;
  TransportMonitor* monitor = nullptr;
  long next_eval = 0;
  Index n = 0;

  struct DeviceState {
    int id = 0;
    std::vector<SparseExample> shard;
    std::uint64_t seed = 0;

    Network net{1, 1, 1, 0};        // window-local model
    std::vector<Index> theta;       // held target columns (global ids)
    std::unordered_map<Index, Index> slot;

    // Persistent optimizer state. Pruned methods keep lazily-touched
    // per-column moments; full-layer methods use the packed Adam.
    long opt_step = 0;
    Matrix m_w1, v_w1;
    Vector m_b1, v_b1;
    std::unordered_map<Index, std::pair<Vector, Vector>> w2_moments;
    std::unordered_map<Index, std::pair<double, double>> b2_moments;
    std::unique_ptr<Adam> full_adam;

    // Hashing state retained for the current LSH window.
    std::optional<FoldingOperator> fold_op;
    std::vector<HashFunction> functions;
    std::vector<HashTable> tables;
    long lsh_events = 0;

    std::vector<SparseExample> batch;

    // Target-layer weight-matrix reals currently / at most held
    // (sketch and fetched columns; optimizer slots and the broadcast
    // bias are tracked separately from this counter).
    std::uint64_t reals_current = 0;
    std::uint64_t reals_peak = 0;

    double last_loss = 0.0;
    bool has_loss = false;
  };
  std::vector<DeviceState> devices;

  // --- transport ---------------------------------------------------------

  std::uint64_t round_down = 0, round_up = 0;

  void send_weights(Direction dir, Payload payload, int device, Index rows,
                    Index cols) {
    const std::uint64_t bytes =
        8ULL * static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
    (dir == Direction::ServerToDevice ? round_down : round_up) += bytes;
    if (monitor) monitor->on_weights(dir, payload, device, rows, cols);
  }
  void send_indices(Direction dir, Payload payload, int device,
                    const std::vector<Index>& idx) {
    (dir == Direction::ServerToDevice ? round_down : round_up) +=
        8ULL * idx.size();
    if (monitor) monitor->on_indices(dir, payload, device, idx);
  }
  void send_scalar(Direction dir, Payload payload, int device, double value) {
    (dir == Direction::ServerToDevice ? round_down : round_up) += 8;
    if (monitor) monitor->on_scalar(dir, payload, device, value);
  }

  // --- device-side round steps -------------------------------------------

  bool is_boundary(long t) const { return t % cfg.steps_per_lsh == 0; }
  bool is_sync(long t) const {
    return (t + 1) % cfg.steps_per_lsh == 0 || t == cfg.total_steps - 1;
  }

  void broadcast(DeviceState& dev) {
    send_weights(Direction::ServerToDevice, Payload::PreTargetWeights, dev.id,
                 server.input_dim(), server.hidden_dim());
    send_weights(Direction::ServerToDevice, Payload::PreTargetWeights, dev.id,
                 server.hidden_dim(), 1);
    send_weights(Direction::ServerToDevice, Payload::TargetBias, dev.id, n, 1);
  }

  // LSH boundary: refresh the device's view of the target layer, re-hash,
  // and fetch the active columns.
  void lsh_event(DeviceState& dev, long t) {
    broadcast(dev);
    dev.fold_op.reset();
    dev.functions.clear();
    dev.tables.clear();
    dev.reals_current = 0;

    dev.batch = draw_batch(dev.shard, cfg.batch_size, dev.seed, t);

    Matrix w1 = server.w1();
    Vector b1 = server.b1();

    if (holds_full_layer(cfg.method)) {
      send_weights(Direction::ServerToDevice, Payload::FullTargetLayer, dev.id,
                   server.hidden_dim(), n);
      dev.reals_current = static_cast<std::uint64_t>(server.hidden_dim()) *
                          static_cast<std::uint64_t>(n);
      dev.reals_peak = std::max(dev.reals_peak, dev.reals_current);
      dev.net = Network::from_parts(std::move(w1), std::move(b1), server.w2(),
                                    server.b2());
    }

    const std::uint64_t event_seed =
        derive_seed(dev.seed, kStreamLsh, static_cast<std::uint64_t>(dev.lsh_events));
    std::vector<Index> theta_lsh;

    if (uses_lsh(cfg.method)) {
      Matrix sketch;
      FoldingOperator fold_op = FoldingOperator::identity_tiling(
          server.hidden_dim(), server.hidden_dim());
      switch (cfg.method) {
        case Method::PGHash:
          fold_op = FoldingOperator::identity_tiling(server.hidden_dim(),
                                                     cfg.sketch_dim);
          sketch = fold_op.apply_columns(server.w2());
          send_weights(Direction::ServerToDevice, Payload::TargetSketch, dev.id,
                       cfg.sketch_dim, n);
          dev.reals_current += static_cast<std::uint64_t>(cfg.sketch_dim) *
                               static_cast<std::uint64_t>(n);
          break;
        case Method::PGHashD: {
          fold_op = FoldingOperator::permute_truncate(
              server.hidden_dim(), cfg.sketch_dim,
              derive_seed(dev.seed, kStreamCoords,
                          static_cast<std::uint64_t>(dev.lsh_events)));
          std::vector<Index> rows(fold_op.permutation().begin(),
                                  fold_op.permutation().begin() + cfg.sketch_dim);
          send_indices(Direction::DeviceToServer, Payload::SketchRowIndices,
                       dev.id, rows);
          sketch = fold_op.apply_columns(server.w2());
          send_weights(Direction::ServerToDevice, Payload::TargetSketch, dev.id,
                       cfg.sketch_dim, n);
          dev.reals_current += static_cast<std::uint64_t>(cfg.sketch_dim) *
                               static_cast<std::uint64_t>(n);
          break;
        }
        default:  // SLIDE methods hash the full layer already on device
          sketch = server.w2();
          break;
      }
      dev.reals_peak = std::max(dev.reals_peak, dev.reals_current);

      if (!dev.batch.empty()) {
        // Hidden activations from the freshly received pre-target weights.
        Network probe = Network::from_parts(
            holds_full_layer(cfg.method) ? dev.net.w1() : w1,
            holds_full_layer(cfg.method) ? dev.net.b1() : b1, Matrix::Zero(server.hidden_dim(), 0),
            Vector::Zero(0));
        Matrix hidden = probe.hidden_batch(dev.batch);
        auto lsh = device_lsh_analysis(hidden, sketch, fold_op, cfg, event_seed);
        theta_lsh = lsh.theta.indices();
        dev.functions = std::move(lsh.functions);
        dev.tables = std::move(lsh.tables);
      }
      dev.fold_op = fold_op;

      // The sketch itself is discarded once the tables exist.
      if (!holds_full_layer(cfg.method)) {
        dev.reals_current = 0;
      }
    } else if (cfg.method == Method::SampledSoftmax) {
      theta_lsh = sampled_softmax_select(
                      n, cfg.sampled_fraction,
                      derive_seed(dev.seed, kStreamSoftmax,
                                  static_cast<std::uint64_t>(dev.lsh_events)))
                      .indices();
    }

    // Active set for the window: injected true labels of the boundary
    // batch are reserved first, then LSH picks fill the remaining cap.
    if (is_pruned(cfg.method)) {
      SamplingConfig cap_cfg;
      cap_cfg.compression_ratio = cfg.compression_ratio;
      const Index cap = sample_cap(cap_cfg, n);
      std::vector<Index> reserved;
      if (cfg.inject_labels) {
        for (const auto& ex : dev.batch)
          for (Index l : ex.labels)
            if (l >= 0 && l < n) reserved.push_back(l);
        std::sort(reserved.begin(), reserved.end());
        reserved.erase(std::unique(reserved.begin(), reserved.end()),
                       reserved.end());
        if (static_cast<Index>(reserved.size()) > cap)
          reserved = uniform_subset(
              std::move(reserved), cap,
              derive_seed(dev.seed, kStreamInjectTrim,
                          static_cast<std::uint64_t>(dev.lsh_events)));
      }
      std::vector<Index> extras;
      for (Index j : theta_lsh)
        if (!std::binary_search(reserved.begin(), reserved.end(), j))
          extras.push_back(j);
      const Index room = cap - static_cast<Index>(reserved.size());
      if (static_cast<Index>(extras.size()) > room)
        extras = uniform_subset(
            std::move(extras), room,
            derive_seed(dev.seed, kStreamInjectTrim + 1,
                        static_cast<std::uint64_t>(dev.lsh_events)));
      dev.theta = std::move(reserved);
      dev.theta.insert(dev.theta.end(), extras.begin(), extras.end());
      std::sort(dev.theta.begin(), dev.theta.end());
    } else {
      dev.theta.resize(static_cast<std::size_t>(n));
      std::iota(dev.theta.begin(), dev.theta.end(), Index{0});
    }
    dev.slot.clear();
    for (std::size_t i = 0; i < dev.theta.size(); ++i)
      dev.slot[dev.theta[i]] = static_cast<Index>(i);

    // Fetch the active columns (methods that do not hold the full layer).
    if (!holds_full_layer(cfg.method)) {
      send_indices(Direction::DeviceToServer, Payload::ThetaIndices, dev.id,
                   dev.theta);
      send_weights(Direction::ServerToDevice, Payload::ActiveColumns, dev.id,
                   server.hidden_dim(), static_cast<Index>(dev.theta.size()));
      dev.reals_current += static_cast<std::uint64_t>(server.hidden_dim()) *
                           dev.theta.size();
      dev.reals_peak = std::max(dev.reals_peak, dev.reals_current);

      Matrix cols(server.hidden_dim(), static_cast<Index>(dev.theta.size()));
      Vector bias(static_cast<Index>(dev.theta.size()));
      for (std::size_t i = 0; i < dev.theta.size(); ++i) {
        cols.col(static_cast<Index>(i)) = server.w2().col(dev.theta[i]);
        bias[static_cast<Index>(i)] = server.b2()[dev.theta[i]];
      }
      dev.net = Network::from_parts(std::move(w1), std::move(b1),
                                    std::move(cols), std::move(bias));
    } else if (uses_lsh(cfg.method)) {
      send_indices(Direction::DeviceToServer, Payload::ThetaIndices, dev.id,
                   dev.theta);
    }
    ++dev.lsh_events;
  }

  // Per-sample active sets in compact slot space, plus the compact batch
  // whose labels are remapped to held columns.
  void build_active_sets(DeviceState& dev,
                         std::vector<SparseExample>& compact_batch,
                         std::vector<std::vector<Index>>& sets) {
    // Methods with the full layer on device index columns globally;
    // the rest address the compact window net through dev.slot.
    const bool compact = !holds_full_layer(cfg.method);
    const Index width = dev.net.num_labels();
    compact_batch = dev.batch;
    sets.assign(dev.batch.size(), {});

    // Sample codes against the window's tables pick the matching subset
    // of the active columns for each sample.
    std::vector<std::vector<Index>> matched(dev.batch.size());
    if (uses_lsh(cfg.method) && !dev.batch.empty()) {
      Matrix hidden = dev.net.hidden_batch(dev.batch);
      const bool folded =
          cfg.method == Method::PGHash || cfg.method == Method::PGHashD;
      for (std::size_t m = 0; m < dev.batch.size(); ++m) {
        const Vector view = folded ? dev.fold_op->apply(hidden.col(static_cast<Index>(m)))
                                   : Vector(hidden.col(static_cast<Index>(m)));
        std::vector<Index>& into = matched[m];
        for (std::size_t t = 0; t < dev.tables.size(); ++t) {
          HashCode code = dev.functions[t].code(view);
          if (code.is_sentinel()) continue;
          for (Index j : dev.tables[t].bucket(code)) {
            auto it = dev.slot.find(j);
            if (it != dev.slot.end()) into.push_back(compact ? it->second : j);
          }
        }
        std::sort(into.begin(), into.end());
        into.erase(std::unique(into.begin(), into.end()), into.end());
      }
    }

    for (std::size_t m = 0; m < dev.batch.size(); ++m) {
      // Labels in the net's own column space; labels not held this
      // window drop out of the target.
      std::vector<Index> labels;
      for (Index l : dev.batch[m].labels) {
        if (!compact) {
          labels.push_back(l);
        } else {
          auto it = dev.slot.find(l);
          if (it != dev.slot.end()) labels.push_back(it->second);
        }
      }
      std::sort(labels.begin(), labels.end());
      compact_batch[m].labels = labels;

      std::vector<Index>& set = sets[m];
      if (!uses_lsh(cfg.method)) {
        // Dense trains everything; sampled softmax trains every held
        // column (its compact width is the sampled set).
        set.resize(static_cast<std::size_t>(width));
        std::iota(set.begin(), set.end(), Index{0});
      } else {
        set = matched[m];
        if (cfg.inject_labels) {
          std::vector<Index> inject =
              compact ? labels
                      : [&] {
                          std::vector<Index> held;
                          for (Index l : compact_batch[m].labels)
                            if (dev.slot.count(l)) held.push_back(l);
                          return held;
                        }();
          for (Index l : inject)
            if (!std::binary_search(set.begin(), set.end(), l)) set.push_back(l);
          std::sort(set.begin(), set.end());
        }
      }
    }
  }

  void local_step(DeviceState& dev, long t) {
    if (!is_boundary(t)) dev.batch = draw_batch(dev.shard, cfg.batch_size, dev.seed, t);
    dev.has_loss = false;
    if (dev.batch.empty()) return;

    std::vector<SparseExample> compact_batch;
    std::vector<std::vector<Index>> sets;
    build_active_sets(dev, compact_batch, sets);

    Matrix hidden = dev.net.hidden_batch(compact_batch);
    BatchGrads grads = loss_and_grad(dev.net, compact_batch, hidden, sets);
    if (grads.counted_samples == 0) return;
    dev.last_loss = grads.loss;
    dev.has_loss = true;

    if (dev.full_adam) {
      dev.full_adam->apply(dev.net, grads);
      return;
    }
    // Sparse persistent update: dense W1/b1 moments, lazily-touched
    // per-column moments for the held target columns.
    ++dev.opt_step;
    AdamConfig acfg;
    acfg.lr = cfg.lr;
    auto w1 = dev.net.w1().array();
    auto g1 = grads.dw1.array();
    auto m1 = dev.m_w1.array();
    auto v1 = dev.v_w1.array();
    adam_update(w1, g1, m1, v1, dev.opt_step, acfg);
    auto b1 = dev.net.b1().array();
    auto gb1 = grads.db1.array();
    auto mb1 = dev.m_b1.array();
    auto vb1 = dev.v_b1.array();
    adam_update(b1, gb1, mb1, vb1, dev.opt_step, acfg);

    const Index h = dev.net.hidden_dim();
    for (std::size_t i = 0; i < grads.active.size(); ++i) {
      const Index s = grads.active[i];
      const Index global = dev.theta[static_cast<std::size_t>(s)];
      auto& [mcolv, vcolv] = dev.w2_moments.try_emplace(global, Vector::Zero(h),
                                                        Vector::Zero(h))
                                 .first->second;
      auto col = dev.net.w2().col(s).array();
      auto gcol = grads.dw2_active.col(static_cast<Index>(i)).array();
      auto mcol = mcolv.array();
      auto vcol = vcolv.array();
      adam_update(col, gcol, mcol, vcol, dev.opt_step, acfg);

      auto& [mb, vb] = dev.b2_moments.try_emplace(global, 0.0, 0.0).first->second;
      Eigen::Array<double, 1, 1> bp, bg, bm, bv;
      bp[0] = dev.net.b2()[s];
      bg[0] = grads.db2_active[static_cast<Index>(i)];
      bm[0] = mb;
      bv[0] = vb;
      adam_update(bp, bg, bm, bv, dev.opt_step, acfg);
      dev.net.b2()[s] = bp[0];
      mb = bm[0];
      vb = bv[0];
    }
  }

  void upload_and_average(long t) {
    std::vector<const DeviceState*> active_devices;
    for (auto& dev : devices) {
      if (dev.shard.empty()) continue;
      send_weights(Direction::DeviceToServer, Payload::UpdatedPreTarget, dev.id,
                   server.input_dim(), server.hidden_dim());
      send_weights(Direction::DeviceToServer, Payload::UpdatedPreTarget, dev.id,
                   server.hidden_dim(), 1);
      send_weights(Direction::DeviceToServer, Payload::UpdatedColumns, dev.id,
                   server.hidden_dim() + 1, static_cast<Index>(dev.theta.size()));
      if (dev.has_loss)
        send_scalar(Direction::DeviceToServer, Payload::LossValue, dev.id,
                    dev.last_loss);
      active_devices.push_back(&dev);
    }
    if (active_devices.empty()) return;

    const double inv = 1.0 / static_cast<double>(active_devices.size());
    Matrix w1 = Matrix::Zero(server.input_dim(), server.hidden_dim());
    Vector b1 = Vector::Zero(server.hidden_dim());
    for (const auto* dev : active_devices) {
      w1 += dev->net.w1();
      b1 += dev->net.b1();
    }
    server.w1() = w1 * inv;
    server.b1() = b1 * inv;

    // Each target column is averaged over exactly the devices that
    // activated it; untouched columns keep the server's values.
    std::vector<std::vector<const DeviceState*>> activators(
        static_cast<std::size_t>(n));
    for (const auto* dev : active_devices)
      for (Index j : dev->theta)
        activators[static_cast<std::size_t>(j)].push_back(dev);
    for (Index j = 0; j < n; ++j) {
      const auto& devs = activators[static_cast<std::size_t>(j)];
      if (devs.empty()) continue;
      Vector col = Vector::Zero(server.hidden_dim());
      double bias = 0.0;
      const bool compact = !holds_full_layer(cfg.method);
      for (const auto* dev : devs) {
        const Index s = compact ? dev->slot.at(j) : j;
        col += dev->net.w2().col(s);
        bias += dev->net.b2()[s];
      }
      const double scale = 1.0 / static_cast<double>(devs.size());
      server.w2().col(j) = col * scale;
      server.b2()[j] = bias * scale;
    }
    (void)t;
  }
};

Simulator::Simulator(const FedConfig& cfg, std::vector<Dataset> shards,
                     Dataset test_set, std::vector<std::uint64_t> device_seeds)
    : impl_(std::make_unique<Impl>()) {
  if (cfg.num_devices < 1)
    throw std::invalid_argument("Simulator: need at least one device");
  if (shards.size() != static_cast<std::size_t>(cfg.num_devices))
    throw std::invalid_argument("Simulator: shard count != num_devices");
  if (cfg.steps_per_lsh < 1)
    throw std::invalid_argument("Simulator: steps_per_lsh must be >= 1");
  if (!device_seeds.empty() &&
      device_seeds.size() != static_cast<std::size_t>(cfg.num_devices))
    throw std::invalid_argument("Simulator: device seed count mismatch");

  Index num_features = 0, num_labels = 0;
  for (const auto& s : shards) {
    num_features = std::max(num_features, s.meta.num_features);
    num_labels = std::max(num_labels, s.meta.num_labels);
  }
  if (test_set.meta.num_features > 0) {
    num_features = std::max(num_features, test_set.meta.num_features);
    num_labels = std::max(num_labels, test_set.meta.num_labels);
  }
  if (num_features == 0 || num_labels == 0)
    throw std::invalid_argument("Simulator: empty dataset");

  impl_->cfg = cfg;
  impl_->n = num_labels;
  impl_->server = Network(num_features, cfg.hidden_dim, num_labels, cfg.seed);
  impl_->test = std::move(test_set);
  impl_->next_eval = cfg.eval_every > 0 ? cfg.eval_every : 0;

  if (!impl_->test.examples.empty()) {
    std::vector<Index> all(impl_->test.examples.size());
    std::iota(all.begin(), all.end(), Index{0});
    if (cfg.eval_subsample > 0 &&
        cfg.eval_subsample < static_cast<Index>(all.size()))
      all = uniform_subset(std::move(all), cfg.eval_subsample,
                           derive_seed(cfg.seed, kStreamEval));
    for (Index i : all)
      impl_->eval_batch.push_back(impl_->test.examples[static_cast<std::size_t>(i)]);
  }

  for (int i = 0; i < cfg.num_devices; ++i) {
    Impl::DeviceState dev;
    dev.id = i;
    dev.shard = std::move(shards[static_cast<std::size_t>(i)].examples);
    dev.seed = device_seeds.empty() ? device_stream_seed(cfg, i) : device_seeds[static_cast<std::size_t>(i)];
    if (dev.shard.empty())
      std::cerr << "simulator: device " << i << " has an empty shard; excluded\n";
    dev.m_w1 = Matrix::Zero(num_features, cfg.hidden_dim);
    dev.v_w1 = dev.m_w1;
    dev.m_b1 = Vector::Zero(cfg.hidden_dim);
    dev.v_b1 = dev.m_b1;
    if (holds_full_layer(cfg.method)) {
      dev.net = Network::from_parts(impl_->server.w1(), impl_->server.b1(),
                                    impl_->server.w2(), impl_->server.b2());
      AdamConfig acfg;
      acfg.lr = cfg.lr;
      dev.full_adam = std::make_unique<Adam>(dev.net, acfg);
    }
    impl_->devices.push_back(std::move(dev));
  }
}

Simulator::~Simulator() = default;
Simulator::Simulator(Simulator&&) noexcept = default;
Simulator& Simulator::operator=(Simulator&&) noexcept = default;

Simulator Simulator::make(const FedConfig& cfg, const Dataset& train,
                          Dataset test_set) {
  return Simulator(cfg, partition_iid(train, cfg.num_devices, cfg.seed),
                   std::move(test_set));
}

void Simulator::set_monitor(TransportMonitor* monitor) {
  impl_->monitor = monitor;
}

const Network& Simulator::server_model() const { return impl_->server; }
const FedConfig& Simulator::config() const { return impl_->cfg; }

std::uint64_t Simulator::device_peak_target_reals(int device) const {
  return impl_->devices.at(static_cast<std::size_t>(device)).reals_peak;
}

const std::vector<Index>& Simulator::device_active_set(int device) const {
  return impl_->devices.at(static_cast<std::size_t>(device)).theta;
}

double Simulator::evaluate_p_at_1() const {
  if (impl_->eval_batch.empty()) return 0.0;
  Matrix hidden = impl_->server.hidden_batch(impl_->eval_batch);
  Matrix logits = impl_->server.full_logits(hidden);
  return precision_at_1(logits, impl_->eval_batch).value;
}

RoundRecord Simulator::run_round(long t) {
  auto& impl = *impl_;
  impl.round_down = impl.round_up = 0;

  for (auto& dev : impl.devices) {
    if (dev.shard.empty()) continue;
    if (impl.is_boundary(t)) impl.lsh_event(dev, t);
    impl.local_step(dev, t);
  }
  const bool sync = impl.is_sync(t);
  if (sync) impl.upload_and_average(t);

  RoundRecord rec;
  rec.round = t;
  rec.method = impl.cfg.method;
  rec.device_count = impl.cfg.num_devices;
  rec.bytes_down = impl.round_down;
  rec.bytes_up = impl.round_up;

  double frac = 0.0;
  double loss = 0.0;
  int with_loss = 0, with_data = 0;
  for (auto& dev : impl.devices) {
    if (dev.shard.empty()) continue;
    ++with_data;
    rec.activated_per_device.push_back(static_cast<Index>(dev.theta.size()));
    frac += static_cast<double>(dev.theta.size()) / static_cast<double>(impl.n);
    if (dev.has_loss) {
      loss += dev.last_loss;
      ++with_loss;
    }
  }
  if (with_data > 0) rec.avg_active_frac = frac / with_data;
  if (with_loss > 0) {
    rec.loss = loss / with_loss;
    rec.has_loss = true;
  }

  const bool final_round = t == impl.cfg.total_steps - 1;
  if (sync && !impl.eval_batch.empty()) {
    bool due = final_round;
    if (impl.cfg.eval_every > 0 && t + 1 >= impl.next_eval) {
      due = true;
      while (impl.next_eval <= t + 1) impl.next_eval += impl.cfg.eval_every;
    }
    if (due) {
      rec.p_at_1 = evaluate_p_at_1();
      rec.has_p_at_1 = true;
    }
  }
  return rec;
}

Ledger Simulator::run() {
  Ledger ledger;
  for (long t = 0; t < impl_->cfg.total_steps; ++t)
    ledger.rows.push_back(run_round(t));
  return ledger;
}

// ---------------------------------------------------------------------------

Ledger train_single(const FedConfig& cfg, const Dataset& train,
                    const Dataset& test, Network* final_model) {
  if (cfg.method != Method::Dense) {
    // Pruned single-machine training is the one-device protocol without
    // a second party; run it through the simulator directly.
    FedConfig one = cfg;
    one.num_devices = 1;
    std::vector<Dataset> shards;
    shards.push_back(train);
    Simulator sim(one, std::move(shards), test);
    Ledger ledger = sim.run();
    if (final_model) *final_model = sim.server_model();
    return ledger;
  }

  // Dense path: a plain local loop, no transport. The shard shuffle
  // mirrors a one-device partition so both paths draw equal batches.
  const Dataset shard = partition_iid(train, 1, cfg.seed)[0];
  Network model(train.meta.num_features, cfg.hidden_dim, train.meta.num_labels,
                cfg.seed);
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  Adam opt(model, acfg);
  const std::uint64_t device_seed = device_stream_seed(cfg, 0);
  const Index n = model.num_labels();

  std::vector<SparseExample> eval_batch;
  if (!test.examples.empty()) {
    std::vector<Index> all(test.examples.size());
    std::iota(all.begin(), all.end(), Index{0});
    if (cfg.eval_subsample > 0 && cfg.eval_subsample < static_cast<Index>(all.size()))
      all = uniform_subset(std::move(all), cfg.eval_subsample,
                           derive_seed(cfg.seed, kStreamEval));
    for (Index i : all) eval_batch.push_back(test.examples[static_cast<std::size_t>(i)]);
  }

  std::vector<Index> everything(static_cast<std::size_t>(n));
  std::iota(everything.begin(), everything.end(), Index{0});

  Ledger ledger;
  long next_eval = cfg.eval_every > 0 ? cfg.eval_every : 0;
  for (long t = 0; t < cfg.total_steps; ++t) {
    auto batch = draw_batch(shard.examples, cfg.batch_size, device_seed, t);
    RoundRecord rec;
    rec.round = t;
    rec.method = cfg.method;
    rec.device_count = 1;
    rec.avg_active_frac = 1.0;
    rec.activated_per_device.push_back(n);
    if (!batch.empty()) {
      std::vector<std::vector<Index>> sets(batch.size(), everything);
      Matrix hidden = model.hidden_batch(batch);
      BatchGrads grads = loss_and_grad(model, batch, hidden, sets);
      if (grads.counted_samples > 0) {
        rec.loss = grads.loss;
        rec.has_loss = true;
        opt.apply(model, grads);
      }
    }
    const bool sync = (t + 1) % cfg.steps_per_lsh == 0 || t == cfg.total_steps - 1;
    if (sync && !eval_batch.empty()) {
      bool due = t == cfg.total_steps - 1;
      if (cfg.eval_every > 0 && t + 1 >= next_eval) {
        due = true;
        while (next_eval <= t + 1) next_eval += cfg.eval_every;
      }
      if (due) {
        Matrix hidden = model.hidden_batch(eval_batch);
        Matrix logits = model.full_logits(hidden);
        rec.p_at_1 = precision_at_1(logits, eval_batch).value;
        rec.has_p_at_1 = true;
      }
    }
    ledger.rows.push_back(rec);
  }
  if (final_model) *final_model = model;
  return ledger;
}

}  // namespace pghash
