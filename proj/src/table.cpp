#include "pghash/table.hpp"

#include <stdexcept>
#include <utility>

namespace pghash {

HashTable::HashTable(HashFunction function,
                     const Eigen::Ref<const Matrix>& columns)
    : function_(std::move(function)) {
  if (columns.rows() != function_.input_dim())
    throw std::invalid_argument("build_table: column height mismatch");
  const Index n = columns.cols();
  codes_.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    HashCode c = function_.code(columns.col(j));
    buckets_[c.value].push_back(j);
    codes_.push_back(c);
  }
}

const std::vector<Index>& HashTable::bucket(const HashCode& c) const {
  static const std::vector<Index> kEmpty;
  auto it = buckets_.find(c.value);
  return it == buckets_.end() ? kEmpty : it->second;
}

}  // namespace pghash
