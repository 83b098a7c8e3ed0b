#pragma once

#include <cstdint>
#include <vector>

#include "pghash/table.hpp"

namespace pghash {

enum class SamplingStrategy { Vanilla, HammingTopK, HammingThreshold };

struct SamplingConfig {
  double compression_ratio = 1.0;  // CR in (0, 1]
  int num_tables = 1;              // tau
  SamplingStrategy strategy = SamplingStrategy::Vanilla;
  int top_k = 1;                   // HammingTopK
  double hamming_threshold = 0.0;  // HammingThreshold: avg distance <= beta
  std::uint64_t seed = 0;
};

// Activated output-neuron indices for one batch: ascending, no
// duplicates, capped at floor(CR * n) by the samplers.
class NeuronSet {
 public:
  NeuronSet() = default;
  // Sorts and deduplicates.
  static NeuronSet from_unsorted(std::vector<Index> indices);

  bool contains(Index j) const;
  Index size() const { return static_cast<Index>(indices_.size()); }
  bool empty() const { return indices_.empty(); }
  const std::vector<Index>& indices() const { return indices_; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  friend bool operator==(const NeuronSet&, const NeuronSet&) = default;

 private:
  std::vector<Index> indices_;
};

// floor(CR * n), validated >= 1.
Index sample_cap(const SamplingConfig& cfg, Index n);

// Uniform random size-cap subset of a sorted index list, returned
// sorted; the identity when the list is already small enough.
std::vector<Index> uniform_subset(std::vector<Index> sorted, Index cap,
                                  std::uint64_t seed);

// Exact-code-match sampling. Tables are visited in order; each sample's
// bucket is unioned into the result. When the running set exceeds
// floor(CR * n) at a table boundary it is trimmed uniformly at random
// (seeded) and returned immediately. Sentinel-coded samples match
// nothing. batch_codes is indexed [table][sample].
NeuronSet vanilla_sample(const std::vector<std::vector<HashCode>>& batch_codes,
                         const std::vector<HashTable>& tables,
                         const SamplingConfig& cfg, Index n);

// Average-Hamming-distance sampling over bit codes: per sample either
// the top_k closest neurons or every neuron within `hamming_threshold`,
// unioned over the batch and capped like vanilla_sample. With one table
// and threshold 0 this reduces exactly to vanilla_sample.
NeuronSet hamming_sample(const std::vector<std::vector<HashCode>>& batch_codes,
                         const std::vector<HashTable>& tables,
                         const SamplingConfig& cfg, Index n);

// Uniform random subset of size floor(fraction * n).
NeuronSet sampled_softmax_select(Index n, double fraction, std::uint64_t seed);

}  // namespace pghash
