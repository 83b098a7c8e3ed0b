#pragma once

#include <unordered_map>
#include <vector>

#include "pghash/hash.hpp"
#include "pghash/types.hpp"

namespace pghash {

// Per-neuron hash codes for one hash function, plus a code -> neuron
// bucket index. Buckets partition {0..n-1} exactly (sentinel-coded
// neurons share the sentinel bucket). Immutable after construction.
class HashTable {
 public:
  HashTable(HashFunction function, const Eigen::Ref<const Matrix>& columns);

  Index size() const { return static_cast<Index>(codes_.size()); }
  const HashFunction& function() const { return function_; }
  const HashCode& code(Index j) const {
    return codes_[static_cast<std::size_t>(j)];
  }
  const std::vector<HashCode>& codes() const { return codes_; }

  // Neurons whose code equals `c` (ascending). Empty when none match.
  const std::vector<Index>& bucket(const HashCode& c) const;

 private:
  HashFunction function_;
  std::vector<HashCode> codes_;
  std::unordered_map<std::uint64_t, std::vector<Index>> buckets_;
};

// Column j of `columns` is neuron j's weight view: c x n folded for the
// PGHash families, d x n full-width for SimHash/DWTA.
inline HashTable build_table(HashFunction function,
                             const Eigen::Ref<const Matrix>& columns) {
  return HashTable(std::move(function), columns);
}

}  // namespace pghash
