#include <doctest.h>

#include <algorithm>
#include <random>

#include "pghash/rng.hpp"
#include "pghash/table.hpp"

using namespace pghash;

namespace {

Matrix random_columns(Index rows, Index cols, std::uint64_t seed) {
  auto rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace

TEST_SUITE("table") {

TEST_CASE("single-column table looks itself up") {
  Matrix w = random_columns(6, 1, 3);
  auto t = build_table(HashFunction::pghash(4, 6, 11), w);
  REQUIRE(t.size() == 1);
  auto& bucket = t.bucket(t.code(0));
  REQUIRE(bucket.size() == 1);
  CHECK(bucket[0] == 0);
}

TEST_CASE("identical columns share a code") {
  Matrix w = random_columns(5, 3, 4);
  w.col(2) = w.col(0);
  auto t = build_table(HashFunction::pghash(6, 5, 12), w);
  CHECK(t.code(0) == t.code(2));
  auto& bucket = t.bucket(t.code(0));
  CHECK(std::find(bucket.begin(), bucket.end(), 0) != bucket.end());
  CHECK(std::find(bucket.begin(), bucket.end(), 2) != bucket.end());
}

TEST_CASE("rebuild from the same seed is bit-identical") {
  Matrix w = random_columns(8, 20, 5);
  auto a = build_table(HashFunction::pghash(8, 8, 77), w);
  auto b = build_table(HashFunction::pghash(8, 8, 77), w);
  REQUIRE(a.size() == b.size());
  for (Index j = 0; j < a.size(); ++j) CHECK(a.code(j) == b.code(j));
}

TEST_CASE("buckets partition the neuron indices") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Matrix w = random_columns(4, 50, derive_seed(21, s));
    auto t = build_table(HashFunction::pghash_d(3, 4, derive_seed(22, s)), w);
    std::vector<char> seen(50, 0);
    for (Index j = 0; j < t.size(); ++j) {
      auto& bucket = t.bucket(t.code(j));
      CHECK(std::find(bucket.begin(), bucket.end(), j) != bucket.end());
      if (!seen[static_cast<std::size_t>(j)]) {
        for (Index member : bucket) {
          CHECK_FALSE(seen[static_cast<std::size_t>(member)]);
          seen[static_cast<std::size_t>(member)] = 1;
        }
      }
    }
    CHECK(std::count(seen.begin(), seen.end(), 1) == 50);
  }
}

TEST_CASE("column height must match the hash input width") {
  Matrix w = random_columns(6, 2, 9);
  CHECK_THROWS_AS(build_table(HashFunction::pghash(4, 5, 1), w),
                  std::invalid_argument);
}

}  // TEST_SUITE
