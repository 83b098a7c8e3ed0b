#include "pghash/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pghash/rng.hpp"

namespace pghash {

// Partial Fisher-Yates over the (already sorted, hence order-canonical)
// candidate list keeps the draw reproducible.
std::vector<Index> uniform_subset(std::vector<Index> sorted, Index cap,
                                  std::uint64_t seed) {
  if (static_cast<Index>(sorted.size()) <= cap) return sorted;
  auto rng = make_engine(seed);
  const Index m = static_cast<Index>(sorted.size());
  for (Index i = 0; i < cap; ++i) {
    std::uniform_int_distribution<Index> pick(i, m - 1);
    std::swap(sorted[static_cast<std::size_t>(i)],
              sorted[static_cast<std::size_t>(pick(rng))]);
  }
  sorted.resize(static_cast<std::size_t>(cap));
  std::sort(sorted.begin(), sorted.end());
  return sorted;
}

namespace {

void check_inputs(const std::vector<std::vector<HashCode>>& batch_codes,
                  const std::vector<HashTable>& tables,
                  const SamplingConfig& cfg, Index n) {
  if (cfg.num_tables < 1)
    throw std::invalid_argument("sampling: num_tables must be >= 1");
  if (tables.size() != static_cast<std::size_t>(cfg.num_tables) ||
      batch_codes.size() != tables.size())
    throw std::invalid_argument("sampling: table/code count mismatch");
  const std::size_t batch = batch_codes.empty() ? 0 : batch_codes[0].size();
  for (const auto& per_table : batch_codes)
    if (per_table.size() != batch)
      throw std::invalid_argument("sampling: ragged batch codes");
  for (const auto& t : tables)
    if (t.size() != n)
      throw std::invalid_argument("sampling: tables disagree on n");
}

}  // namespace

NeuronSet NeuronSet::from_unsorted(std::vector<Index> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  NeuronSet s;
  s.indices_ = std::move(indices);
  return s;
}

bool NeuronSet::contains(Index j) const {
  return std::binary_search(indices_.begin(), indices_.end(), j);
}

Index sample_cap(const SamplingConfig& cfg, Index n) {
  if (cfg.compression_ratio <= 0.0 || cfg.compression_ratio > 1.0)
    throw std::invalid_argument("sampling: CR must lie in (0, 1]");
  const Index cap =
      static_cast<Index>(std::floor(cfg.compression_ratio * static_cast<double>(n)));
  if (cap < 1)
    throw std::invalid_argument("sampling: floor(CR * n) must be >= 1");
  return cap;
}

NeuronSet vanilla_sample(const std::vector<std::vector<HashCode>>& batch_codes,
                         const std::vector<HashTable>& tables,
                         const SamplingConfig& cfg, Index n) {
  check_inputs(batch_codes, tables, cfg, n);
  const Index cap = sample_cap(cfg, n);

  std::vector<char> member(static_cast<std::size_t>(n), 0);
  std::vector<Index> selected;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    for (const HashCode& code : batch_codes[t]) {
      if (code.is_sentinel()) continue;
      for (Index j : tables[t].bucket(code)) {
        if (!member[static_cast<std::size_t>(j)]) {
          member[static_cast<std::size_t>(j)] = 1;
          selected.push_back(j);
        }
      }
    }
    if (static_cast<Index>(selected.size()) > cap) {
      std::sort(selected.begin(), selected.end());
      NeuronSet s = NeuronSet::from_unsorted(
          uniform_subset(std::move(selected), cap, derive_seed(cfg.seed, t)));
      return s;
    }
  }
  return NeuronSet::from_unsorted(std::move(selected));
}

NeuronSet hamming_sample(const std::vector<std::vector<HashCode>>& batch_codes,
                         const std::vector<HashTable>& tables,
                         const SamplingConfig& cfg, Index n) {
  check_inputs(batch_codes, tables, cfg, n);
  if (cfg.strategy != SamplingStrategy::HammingTopK &&
      cfg.strategy != SamplingStrategy::HammingThreshold)
    throw std::invalid_argument("hamming_sample: wrong strategy");
  for (const auto& t : tables)
    if (!t.function().is_bit_family())
      throw std::invalid_argument("hamming_sample: bit-code families only");
  const Index cap = sample_cap(cfg, n);
  const std::size_t batch = batch_codes.empty() ? 0 : batch_codes[0].size();
  const double tau = static_cast<double>(tables.size());

  std::vector<char> member(static_cast<std::size_t>(n), 0);
  std::vector<Index> selected;
  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<Index> order;
  for (std::size_t m = 0; m < batch; ++m) {
    std::fill(dist.begin(), dist.end(), 0.0);
    for (std::size_t t = 0; t < tables.size(); ++t)
      for (Index j = 0; j < n; ++j)
        dist[static_cast<std::size_t>(j)] +=
            hamming(batch_codes[t][m], tables[t].code(j));
    for (auto& d : dist) d /= tau;

    auto add = [&](Index j) {
      if (!member[static_cast<std::size_t>(j)]) {
        member[static_cast<std::size_t>(j)] = 1;
        selected.push_back(j);
      }
    };
    if (cfg.strategy == SamplingStrategy::HammingThreshold) {
      for (Index j = 0; j < n; ++j)
        if (dist[static_cast<std::size_t>(j)] <= cfg.hamming_threshold) add(j);
    } else {
      if (cfg.top_k < 1)
        throw std::invalid_argument("hamming_sample: top_k must be >= 1");
      const Index take = std::min<Index>(cfg.top_k, n);
      order.resize(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Index{0});
      // Ties broken by lower index: (distance, index) lexicographic.
      std::nth_element(order.begin(), order.begin() + (take - 1), order.end(),
                       [&](Index a, Index b) {
                         double da = dist[static_cast<std::size_t>(a)];
                         double db = dist[static_cast<std::size_t>(b)];
                         return da != db ? da < db : a < b;
                       });
      for (Index i = 0; i < take; ++i) add(order[static_cast<std::size_t>(i)]);
    }
  }
  std::sort(selected.begin(), selected.end());
  if (static_cast<Index>(selected.size()) > cap)
    selected = uniform_subset(std::move(selected), cap, derive_seed(cfg.seed, 0));
  return NeuronSet::from_unsorted(std::move(selected));
}

NeuronSet sampled_softmax_select(Index n, double fraction, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("sampled_softmax_select: n must be positive");
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("sampled_softmax_select: fraction must lie in (0, 1]");
  const Index take =
      static_cast<Index>(std::floor(fraction * static_cast<double>(n)));
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  return NeuronSet::from_unsorted(
      uniform_subset(std::move(all), std::max<Index>(take, 1), seed));
}

}  // namespace pghash
