#include <doctest.h>

#include <cmath>
#include <random>

#include "pghash/fold.hpp"
#include "pghash/hash.hpp"
#include "pghash/rng.hpp"

using namespace pghash;

namespace {

Vector random_vector(Index d, std::uint64_t seed) {
  auto rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace

TEST_SUITE("hash") {

TEST_CASE("pghash code with identity projection reads coordinate signs") {
  auto f = HashFunction::with_projection(HashKind::PGHash, Matrix::Identity(2, 2));
  Vector x(2);
  x << 4, -6;
  HashCode c = pghash_code(f, x);
  CHECK(c.bit(0));
  CHECK_FALSE(c.bit(1));
  CHECK(c.length == 2);
}

TEST_CASE("zero input yields the all-zero code") {
  auto f = HashFunction::pghash(8, 4, 123);
  HashCode c = pghash_code(f, Vector::Zero(4));
  CHECK(c.value == 0);
}

TEST_CASE("fold-sign identity: pghash on sketch equals simhash on tiling") {
  const Index d = 12, c = 3;
  auto op = FoldingOperator::identity_tiling(d, c);
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto f = HashFunction::pghash(10, c, derive_seed(9, s));
    auto tiled = HashFunction::with_projection(HashKind::SimHash,
                                               tile(f.projection(), d / c));
    Vector x = random_vector(d, derive_seed(10, s));
    HashCode lhs = pghash_code(f, fold(op, x));
    HashCode rhs = simhash_code(tiled, x);
    CHECK(lhs.value == rhs.value);
  }
}

TEST_CASE("simhash single-row stub") {
  Matrix row = Matrix::Zero(1, 5);
  row(0, 0) = 1.0;
  auto f = HashFunction::with_projection(HashKind::SimHash, row);
  Vector x = Vector::Zero(5);
  x[0] = 2.5;
  CHECK(simhash_code(f, x).bit(0));
  x[0] = -2.5;
  CHECK_FALSE(simhash_code(f, x).bit(0));
}

TEST_CASE("negating the input complements the code when no projection is zero") {
  auto f = HashFunction::simhash(16, 9, 321);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Vector x = random_vector(9, derive_seed(11, s));
    std::uint64_t a = simhash_code(f, x).value;
    std::uint64_t b = simhash_code(f, (-x).eval()).value;
    CHECK((a ^ b) == ((std::uint64_t{1} << 16) - 1));
  }
}

TEST_CASE("wta code picks the highest-magnitude selected entry") {
  // Selection is seed-dependent; use k = dim so all coordinates are
  // selected and only their order varies.
  auto f = HashFunction::dwta(3, 3, 5);
  Vector v(3);
  v << 0.1, -5.0, 2.0;
  HashCode c = wta_code(f, v);
  REQUIRE_FALSE(c.is_sentinel());
  CHECK(v[f.selected_coords()[c.value]] == -5.0);
}

TEST_CASE("all-zero selection returns the sentinel") {
  auto f = HashFunction::dwta(4, 6, 17);
  HashCode c = wta_code(f, Vector::Zero(6));
  CHECK(c.is_sentinel());
}

TEST_CASE("k=1 always wins position 0 unless zero") {
  auto f = HashFunction::pghash_d(1, 5, 99);
  Vector v = Vector::Ones(5);
  CHECK(wta_code(f, v).value == 0);
  CHECK(wta_code(f, Vector::Zero(5)).is_sentinel());
}

TEST_CASE("max rule can prefer zero over negatives, abs-max cannot") {
  Vector v(2);
  v << 0.0, -5.0;
  auto abs_f = HashFunction::dwta(2, 2, 4, WtaRule::AbsMax);
  auto max_f = HashFunction::dwta(2, 2, 4, WtaRule::Max);
  HashCode a = wta_code(abs_f, v);
  HashCode m = wta_code(max_f, v);
  CHECK(v[abs_f.selected_coords()[a.value]] == -5.0);
  CHECK(v[max_f.selected_coords()[m.value]] == 0.0);
}

TEST_CASE("ties break toward the lowest selected position") {
  auto f = HashFunction::dwta(3, 3, 1);
  Vector v(3);
  v << 2.0, 2.0, 2.0;
  CHECK(wta_code(f, v).value == 0);
}

TEST_CASE("same seed reproduces the projection bit-exactly") {
  auto a = HashFunction::pghash(8, 16, 42);
  auto b = HashFunction::pghash(8, 16, 42);
  CHECK(a.projection() == b.projection());
  auto c = HashFunction::dwta(5, 40, 42);
  auto d = HashFunction::dwta(5, 40, 42);
  CHECK(c.selected_coords() == d.selected_coords());
  auto e = HashFunction::pghash(8, 16, 43);
  CHECK(a.projection() != e.projection());
}

TEST_CASE("constructor validation") {
  CHECK_THROWS_AS(HashFunction::pghash(65, 8, 0), std::invalid_argument);
  CHECK_THROWS_AS(HashFunction::pghash(0, 8, 0), std::invalid_argument);
  CHECK_THROWS_AS(HashFunction::dwta(9, 8, 0), std::invalid_argument);
  CHECK_THROWS_AS(HashFunction::pghash_d(9, 8, 0), std::invalid_argument);
}

TEST_CASE("input length mismatch") {
  auto f = HashFunction::pghash(4, 8, 3);
  CHECK_THROWS_AS(pghash_code(f, Vector::Zero(9)), std::invalid_argument);
  auto g = HashFunction::dwta(4, 8, 3);
  CHECK_THROWS_AS(wta_code(g, Vector::Zero(7)), std::invalid_argument);
}

TEST_CASE("hamming distance") {
  HashCode a{0b101, 3, CodeKind::Bits};
  HashCode b{0b011, 3, CodeKind::Bits};
  CHECK(hamming(a, a) == 0);
  CHECK(hamming(a, b) == 2);
  HashCode c{0b10101010, 8, CodeKind::Bits};
  HashCode d{static_cast<std::uint64_t>(0b01010101), 8, CodeKind::Bits};
  CHECK(hamming(c, d) == 8);
}

TEST_CASE("hamming rejects WTA codes and mismatched lengths") {
  HashCode wta{1, 4, CodeKind::Index};
  HashCode bits{1, 4, CodeKind::Bits};
  CHECK_THROWS_AS(hamming(wta, wta), std::invalid_argument);
  HashCode longer{1, 5, CodeKind::Bits};
  CHECK_THROWS_AS(hamming(bits, longer), std::invalid_argument);
}

TEST_CASE("empirical simhash mismatch rate approaches theta/pi") {
  // Monte-Carlo estimate over many independent single-bit functions.
  const Index d = 10;
  Vector x = random_vector(d, 1001);
  Vector y = random_vector(d, 1002);
  const double theta =
      std::acos(x.dot(y) / (x.norm() * y.norm()));
  const int trials = 40000;
  int mismatches = 0;
  for (int t = 0; t < trials; ++t) {
    auto f = HashFunction::simhash(1, d, derive_seed(5000, t));
    if (simhash_code(f, x).value != simhash_code(f, y).value) ++mismatches;
  }
  const double rate = static_cast<double>(mismatches) / trials;
  const double expected = theta / M_PI;
  const double stderr_bound = 4.0 * std::sqrt(expected * (1 - expected) / trials);
  CHECK(std::abs(rate - expected) < stderr_bound);
}

}  // TEST_SUITE
