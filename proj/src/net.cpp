#include "pghash/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "pghash/rng.hpp"

namespace pghash {

Network::Network(Index input_dim, Index hidden_dim, Index num_labels,
                 std::uint64_t seed) {
  if (input_dim <= 0 || hidden_dim <= 0 || num_labels <= 0)
    throw std::invalid_argument("Network: dimensions must be positive");
  auto rng = make_engine(seed, 10);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s1 = std::sqrt(2.0 / static_cast<double>(input_dim + hidden_dim));
  const double s2 = std::sqrt(2.0 / static_cast<double>(hidden_dim + num_labels));
  w1_.resize(input_dim, hidden_dim);
  for (Index i = 0; i < input_dim; ++i)
    for (Index j = 0; j < hidden_dim; ++j) w1_(i, j) = s1 * normal(rng);
  w2_.resize(hidden_dim, num_labels);
  for (Index i = 0; i < hidden_dim; ++i)
    for (Index j = 0; j < num_labels; ++j) w2_(i, j) = s2 * normal(rng);
  b1_ = Vector::Zero(hidden_dim);
  b2_ = Vector::Zero(num_labels);
}

Network Network::from_parts(Matrix w1, Vector b1, Matrix w2, Vector b2) {
  if (w1.cols() != w2.rows() || b1.size() != w1.cols() || b2.size() != w2.cols())
    throw std::invalid_argument("Network::from_parts: inconsistent shapes");
  Network net(1, 1, 1, 0);
  net.w1_ = std::move(w1);
  net.b1_ = std::move(b1);
  net.w2_ = std::move(w2);
  net.b2_ = std::move(b2);
  return net;
}

Vector Network::hidden(const SparseExample& example) const {
  Vector pre = b1_;
  for (const auto& [idx, value] : example.features) {
    if (idx < 0 || idx >= w1_.rows())
      throw std::out_of_range("hidden: feature index out of range");
    pre += value * w1_.row(idx).transpose();
  }
  return pre.cwiseMax(0.0);
}

Matrix Network::hidden_batch(std::span<const SparseExample> batch) const {
  Matrix out(hidden_dim(), static_cast<Index>(batch.size()));
  for (std::size_t m = 0; m < batch.size(); ++m) out.col(static_cast<Index>(m)) = hidden(batch[m]);
  return out;
}

Vector Network::active_logits(const Eigen::Ref<const Vector>& hidden,
                              const std::vector<Index>& active) const {
  Vector out(static_cast<Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) {
    const Index j = active[i];
    if (j < 0 || j >= w2_.cols())
      throw std::out_of_range("active_logits: neuron index out of range");
    out[static_cast<Index>(i)] = w2_.col(j).dot(hidden) + b2_[j];
  }
  target_flops_ += static_cast<std::uint64_t>(active.size()) *
                   (2 * static_cast<std::uint64_t>(hidden_dim()) + 1);
  return out;
}

Matrix Network::full_logits(const Eigen::Ref<const Matrix>& hidden) const {
  target_flops_ += 2 * static_cast<std::uint64_t>(hidden.cols()) *
                   static_cast<std::uint64_t>(w2_.size());
  return (w2_.transpose() * hidden).colwise() + b2_;
}

BatchGrads loss_and_grad(const Network& net,
                         std::span<const SparseExample> batch,
                         const Eigen::Ref<const Matrix>& hidden,
                         const std::vector<std::vector<Index>>& active_sets) {
  if (static_cast<std::size_t>(hidden.cols()) != batch.size() ||
      active_sets.size() != batch.size())
    throw std::invalid_argument("loss_and_grad: batch size mismatch");

  BatchGrads grads;
  grads.dw1 = Matrix::Zero(net.input_dim(), net.hidden_dim());
  grads.db1 = Vector::Zero(net.hidden_dim());

  // Union of active columns, then per-column slots in the packed grad.
  std::vector<Index> all;
  for (const auto& set : active_sets) all.insert(all.end(), set.begin(), set.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  grads.active = std::move(all);
  std::unordered_map<Index, Index> slot;
  slot.reserve(grads.active.size());
  for (std::size_t i = 0; i < grads.active.size(); ++i)
    slot[grads.active[i]] = static_cast<Index>(i);
  grads.dw2_active = Matrix::Zero(net.hidden_dim(), static_cast<Index>(grads.active.size()));
  grads.db2_active = Vector::Zero(static_cast<Index>(grads.active.size()));

  double total_loss = 0.0;
  Index counted = 0;
  Index skipped = 0;
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const auto& active = active_sets[m];
    const auto& labels = batch[m].labels;
    if (labels.empty()) {
      ++skipped;
      continue;
    }
    std::vector<Index> targets;
    for (Index l : labels)
      if (std::binary_search(active.begin(), active.end(), l)) targets.push_back(l);
    if (active.empty() || targets.empty()) {
      ++skipped;
      continue;
    }

    const Vector h = hidden.col(static_cast<Index>(m));
    Vector logits = net.active_logits(h, active);
    const double zmax = logits.maxCoeff();
    Vector p = (logits.array() - zmax).exp();
    const double z = p.sum();
    p /= z;

    const double inv_t = 1.0 / static_cast<double>(targets.size());
    double sample_loss = 0.0;
    Vector g = p;  // d loss / d logits = softmax - target
    for (Index t : targets) {
      const auto it = std::lower_bound(active.begin(), active.end(), t);
      const Index pos = static_cast<Index>(it - active.begin());
      sample_loss -= inv_t * (logits[pos] - zmax - std::log(z));
      g[pos] -= inv_t;
    }
    total_loss += sample_loss;
    ++counted;

    // Backward through the active columns only.
    Vector dh = Vector::Zero(net.hidden_dim());
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Index j = active[i];
      const Index s = slot[j];
      const double gi = g[static_cast<Index>(i)];
      grads.dw2_active.col(s) += gi * h;
      grads.db2_active[s] += gi;
      dh += gi * net.w2().col(j);
    }
    Vector dpre = (h.array() > 0.0).select(dh.array(), 0.0).matrix();
    grads.db1 += dpre;
    for (const auto& [idx, value] : batch[m].features)
      grads.dw1.row(idx) += value * dpre.transpose();
  }
  if (skipped > 0)
    std::cerr << "loss_and_grad: skipped " << skipped
              << " sample(s) without a usable label in the active set\n";

  if (counted > 0) {
    const double inv = 1.0 / static_cast<double>(counted);
    grads.dw1 *= inv;
    grads.db1 *= inv;
    grads.dw2_active *= inv;
    grads.db2_active *= inv;
    total_loss *= inv;
  }
  grads.loss = total_loss;
  grads.counted_samples = counted;
  return grads;
}

Adam::Adam(const Network& net, AdamConfig cfg) : cfg_(cfg) {
  m_w1_ = Matrix::Zero(net.input_dim(), net.hidden_dim());
  v_w1_ = m_w1_;
  m_b1_ = Vector::Zero(net.hidden_dim());
  v_b1_ = m_b1_;
  m_w2_ = Matrix::Zero(net.hidden_dim(), net.num_labels());
  v_w2_ = m_w2_;
  m_b2_ = Vector::Zero(net.num_labels());
  v_b2_ = m_b2_;
}

void Adam::apply(Network& net, const BatchGrads& grads) {
  if (!grads.dw1.allFinite() || !grads.db1.allFinite() ||
      !grads.dw2_active.allFinite() || !grads.db2_active.allFinite())
    throw std::invalid_argument("adam: non-finite gradient");
  ++step_;

  auto w1 = net.w1().array();
  auto g1 = grads.dw1.array();
  auto m1 = m_w1_.array();
  auto v1 = v_w1_.array();
  adam_update(w1, g1, m1, v1, step_, cfg_);
  auto b1 = net.b1().array();
  auto gb1 = grads.db1.array();
  auto mb1 = m_b1_.array();
  auto vb1 = v_b1_.array();
  adam_update(b1, gb1, mb1, vb1, step_, cfg_);

  for (std::size_t i = 0; i < grads.active.size(); ++i) {
    const Index j = grads.active[i];
    auto col = net.w2().col(j).array();
    auto gcol = grads.dw2_active.col(static_cast<Index>(i)).array();
    auto mcol = m_w2_.col(j).array();
    auto vcol = v_w2_.col(j).array();
    adam_update(col, gcol, mcol, vcol, step_, cfg_);

    auto b = net.b2().segment(j, 1).array();
    auto gb = grads.db2_active.segment(static_cast<Index>(i), 1).array();
    auto mb = m_b2_.segment(j, 1).array();
    auto vb = v_b2_.segment(j, 1).array();
    adam_update(b, gb, mb, vb, step_, cfg_);
  }
}

PrecisionAt1 precision_at_1(const Eigen::Ref<const Matrix>& full_logits,
                            std::span<const SparseExample> batch) {
  if (static_cast<std::size_t>(full_logits.cols()) != batch.size())
    throw std::invalid_argument("precision_at_1: batch size mismatch");
  PrecisionAt1 out;
  double hits = 0.0;
  for (std::size_t m = 0; m < batch.size(); ++m) {
    if (batch[m].labels.empty()) continue;
    const auto col = full_logits.col(static_cast<Index>(m));
    Index best = 0;
    for (Index j = 1; j < col.size(); ++j)
      if (col[j] > col[best]) best = j;  // strict > ties to the lowest index
    ++out.counted;
    if (std::binary_search(batch[m].labels.begin(), batch[m].labels.end(), best))
      hits += 1.0;
  }
  out.value = out.counted == 0 ? 0.0 : hits / static_cast<double>(out.counted);
  return out;
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x50474331;  // "PGC1"

void write_raw(std::ofstream& out, const void* p, std::size_t bytes) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
}

void read_raw(std::ifstream& in, void* p, std::size_t bytes) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

void write_matrix(std::ofstream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      write_raw(out, &v, sizeof(v));
    }
}

void read_matrix(std::ifstream& in, Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      double v;
      read_raw(in, &v, sizeof(v));
      m(i, j) = v;
    }
}

void write_vector(std::ofstream& out, const Vector& v) {
  write_raw(out, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

void read_vector(std::ifstream& in, Vector& v) {
  read_raw(in, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net,
                     const Adam& opt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  write_raw(out, &kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::int64_t dims[3] = {net.input_dim(), net.hidden_dim(),
                                net.num_labels()};
  write_raw(out, dims, sizeof(dims));
  write_matrix(out, net.w1());
  write_vector(out, net.b1());
  write_matrix(out, net.w2());
  write_vector(out, net.b2());
  const std::int64_t step = opt.step_;
  write_raw(out, &step, sizeof(step));
  write_matrix(out, opt.m_w1_);
  write_matrix(out, opt.v_w1_);
  write_vector(out, opt.m_b1_);
  write_vector(out, opt.v_b1_);
  write_matrix(out, opt.m_w2_);
  write_matrix(out, opt.v_w2_);
  write_vector(out, opt.m_b2_);
  write_vector(out, opt.v_b2_);
}

void load_checkpoint(const std::string& path, Network& net, Adam& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::uint32_t magic;
  read_raw(in, &magic, sizeof(magic));
  if (magic != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic (wrong file or version)");
  std::int64_t dims[3];
  read_raw(in, dims, sizeof(dims));
  if (dims[0] != net.input_dim() || dims[1] != net.hidden_dim() ||
      dims[2] != net.num_labels())
    throw std::runtime_error("checkpoint: shape mismatch");
  read_matrix(in, net.w1());
  read_vector(in, net.b1());
  read_matrix(in, net.w2());
  read_vector(in, net.b2());
  std::int64_t step;
  read_raw(in, &step, sizeof(step));
  opt.step_ = step;
  read_matrix(in, opt.m_w1_);
  read_matrix(in, opt.v_w1_);
  read_vector(in, opt.m_b1_);
  read_vector(in, opt.v_b1_);
  read_matrix(in, opt.m_w2_);
  read_matrix(in, opt.v_w2_);
  read_vector(in, opt.m_b2_);
  read_vector(in, opt.v_b2_);
}

}  // namespace pghash
