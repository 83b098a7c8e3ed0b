#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pghash/data.hpp"
#include "pghash/types.hpp"

namespace pghash {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update of one parameter block. Eigen array
// expressions in, so the same routine serves scalars, vectors, and
// matrix columns.
template <class P, class G, class M, class V>
void adam_update(Eigen::ArrayBase<P>& param, const Eigen::ArrayBase<G>& grad,
                 Eigen::ArrayBase<M>& m, Eigen::ArrayBase<V>& v, long step,
                 const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.square();
  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  param -= cfg.lr * (m / m_corr) / ((v / v_corr).sqrt() + cfg.eps);
}

// Two dense layers with a ReLU hidden activation: W1 (d_in x h) + b1,
// W2 (h x n) + b2. Columns of W2 are the prunable output neurons. The
// instrumented counter tracks floating-point work in the target layer.
class Network {
 public:
  Network(Index input_dim, Index hidden_dim, Index num_labels,
          std::uint64_t seed);
  // Assembles a network from existing parameters (shape-checked).
  static Network from_parts(Matrix w1, Vector b1, Matrix w2, Vector b2);

  Index input_dim() const { return w1_.rows(); }
  Index hidden_dim() const { return w1_.cols(); }
  Index num_labels() const { return w2_.cols(); }

  Matrix& w1() { return w1_; }
  Vector& b1() { return b1_; }
  Matrix& w2() { return w2_; }
  Vector& b2() { return b2_; }
  const Matrix& w1() const { return w1_; }
  const Vector& b1() const { return b1_; }
  const Matrix& w2() const { return w2_; }
  const Vector& b2() const { return b2_; }

  // ReLU(W1^T x + b1) via sparse accumulation; only stored features
  // are touched.
  Vector hidden(const SparseExample& example) const;
  // Column m holds the hidden activation of batch[m].
  Matrix hidden_batch(std::span<const SparseExample> batch) const;

  // Logits restricted to `active`; cost is proportional to |active|.
  Vector active_logits(const Eigen::Ref<const Vector>& hidden,
                       const std::vector<Index>& active) const;
  // Full n x M logits for evaluation.
  Matrix full_logits(const Eigen::Ref<const Matrix>& hidden) const;

  std::uint64_t target_flops() const { return target_flops_; }
  void reset_target_flops() { target_flops_ = 0; }

 private:
  Matrix w1_;
  Vector b1_;
  Matrix w2_;
  Vector b2_;
  mutable std::uint64_t target_flops_ = 0;
};

// Batch gradients. W2 gradients are stored only for the listed active
// columns (ascending).
struct BatchGrads {
  Matrix dw1;
  Vector db1;
  std::vector<Index> active;
  Matrix dw2_active;  // h x |active|
  Vector db2_active;
  double loss = 0.0;
  Index counted_samples = 0;
};

// Softmax cross-entropy over each sample's active set, with a uniform
// target over the sample's true labels restricted to that set. Samples
// whose labels miss the active set entirely (or that carry no labels)
// are skipped with a warning and contribute no gradient.
BatchGrads loss_and_grad(const Network& net,
                         std::span<const SparseExample> batch,
                         const Eigen::Ref<const Matrix>& hidden,
                         const std::vector<std::vector<Index>>& active_sets);

// Adam state for every parameter of a Network. apply() performs the
// sparse variant: W1/b1 densely, W2/b2 moments and weights only on the
// gradient's active columns (global step count, lazy moments).
class Adam {
 public:
  Adam(const Network& net, AdamConfig cfg);

  long step() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  void apply(Network& net, const BatchGrads& grads);

  friend void save_checkpoint(const std::string& path, const Network& net,
                              const Adam& opt);
  friend void load_checkpoint(const std::string& path, Network& net, Adam& opt);

 private:
  AdamConfig cfg_;
  long step_ = 0;
  Matrix m_w1_, v_w1_;
  Vector m_b1_, v_b1_;
  Matrix m_w2_, v_w2_;
  Vector m_b2_, v_b2_;
};

struct PrecisionAt1 {
  double value = 0.0;    // mean over counted samples
  Index counted = 0;     // samples with at least one label
};

// Whether each sample's top-scoring label (ties to the lowest index)
// belongs to its true label set; unlabeled samples are excluded.
PrecisionAt1 precision_at_1(const Eigen::Ref<const Matrix>& full_logits,
                            std::span<const SparseExample> batch);

// Versioned binary dump of shapes, row-major weights, and optimizer
// state. Layout documented in the README.
void save_checkpoint(const std::string& path, const Network& net,
                     const Adam& opt);
void load_checkpoint(const std::string& path, Network& net, Adam& opt);

}  // namespace pghash
