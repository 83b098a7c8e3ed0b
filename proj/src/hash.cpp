#include "pghash/hash.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pghash/rng.hpp"

namespace pghash {

namespace {

void check_k(int k, Index dim, bool bit_family) {
  if (k <= 0) throw std::invalid_argument("HashFunction: k must be positive");
  if (bit_family && k > 64)
    throw std::invalid_argument("HashFunction: k > 64 does not pack into one word");
  if (!bit_family && k > dim)
    throw std::invalid_argument("HashFunction: k exceeds vector length");
  if (dim <= 0) throw std::invalid_argument("HashFunction: dim must be positive");
}

Matrix gaussian_matrix(int rows, Index cols, std::uint64_t seed) {
  auto rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix s(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) s(i, j) = normal(rng);
  return s;
}

std::vector<Index> distinct_coords(int k, Index dim, std::uint64_t seed) {
  std::vector<Index> all(static_cast<std::size_t>(dim));
  std::iota(all.begin(), all.end(), Index{0});
  auto rng = make_engine(seed);
  // Partial Fisher-Yates: first k entries are a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, dim - 1);
    std::swap(all[static_cast<std::size_t>(i)],
              all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(k));
  return all;
}

}  // namespace

HashFunction HashFunction::pghash(int k, Index sketch_dim, std::uint64_t seed) {
  check_k(k, sketch_dim, true);
  HashFunction f;
  f.kind_ = HashKind::PGHash;
  f.k_ = k;
  f.dim_ = sketch_dim;
  f.seed_ = seed;
  f.projection_ = gaussian_matrix(k, sketch_dim, seed);
  return f;
}

HashFunction HashFunction::simhash(int k, Index dim, std::uint64_t seed) {
  check_k(k, dim, true);
  HashFunction f;
  f.kind_ = HashKind::SimHash;
  f.k_ = k;
  f.dim_ = dim;
  f.seed_ = seed;
  f.projection_ = gaussian_matrix(k, dim, seed);
  return f;
}

HashFunction HashFunction::dwta(int k, Index dim, std::uint64_t seed,
                                WtaRule rule) {
  check_k(k, dim, false);
  HashFunction f;
  f.kind_ = HashKind::DWTA;
  f.k_ = k;
  f.dim_ = dim;
  f.seed_ = seed;
  f.rule_ = rule;
  f.coords_ = distinct_coords(k, dim, seed);
  return f;
}

HashFunction HashFunction::pghash_d(int k, Index sketch_dim, std::uint64_t seed,
                                    WtaRule rule) {
  check_k(k, sketch_dim, false);
  HashFunction f;
  f.kind_ = HashKind::PGHashD;
  f.k_ = k;
  f.dim_ = sketch_dim;
  f.seed_ = seed;
  f.rule_ = rule;
  f.coords_ = distinct_coords(k, sketch_dim, seed);
  return f;
}

HashFunction HashFunction::with_projection(HashKind kind, Matrix projection) {
  if (kind != HashKind::PGHash && kind != HashKind::SimHash)
    throw std::invalid_argument("with_projection: bit families only");
  check_k(static_cast<int>(projection.rows()), projection.cols(), true);
  HashFunction f;
  f.kind_ = kind;
  f.k_ = static_cast<int>(projection.rows());
  f.dim_ = projection.cols();
  f.projection_ = std::move(projection);
  return f;
}

HashCode HashFunction::code(const Eigen::Ref<const Vector>& v) const {
  switch (kind_) {
    case HashKind::PGHash:
      return pghash_code(*this, v);
    case HashKind::SimHash:
      return simhash_code(*this, v);
    default:
      return wta_code(*this, v);
  }
}

namespace {

HashCode sign_code(const HashFunction& f, const Eigen::Ref<const Vector>& x) {
  if (x.size() != f.input_dim())
    throw std::invalid_argument("hash: input length mismatch");
  Vector proj = f.projection() * x;
  std::uint64_t bits = 0;
  for (int i = 0; i < f.hash_length(); ++i)
    if (proj[i] > 0.0) bits |= (std::uint64_t{1} << i);
  return HashCode{bits, static_cast<std::uint16_t>(f.hash_length()),
                  CodeKind::Bits};
}

}  // namespace

HashCode pghash_code(const HashFunction& f, const Eigen::Ref<const Vector>& folded) {
  if (f.kind() != HashKind::PGHash)
    throw std::invalid_argument("pghash_code: wrong hash kind");
  return sign_code(f, folded);
}

HashCode simhash_code(const HashFunction& f, const Eigen::Ref<const Vector>& x) {
  if (f.kind() != HashKind::SimHash)
    throw std::invalid_argument("simhash_code: wrong hash kind");
  return sign_code(f, x);
}

HashCode wta_code(const HashFunction& f, const Eigen::Ref<const Vector>& v) {
  if (f.kind() != HashKind::DWTA && f.kind() != HashKind::PGHashD)
    throw std::invalid_argument("wta_code: wrong hash kind");
  if (v.size() != f.input_dim())
    throw std::invalid_argument("hash: input length mismatch");
  const auto& coords = f.selected_coords();
  Index best = -1;
  double best_score = 0.0;
  bool all_zero = true;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    double raw = v[coords[i]];
    if (raw != 0.0) all_zero = false;
    double score = f.wta_rule() == WtaRule::AbsMax ? std::abs(raw) : raw;
    // Strict > keeps the lowest index on ties.
    if (best < 0 || score > best_score) {
      best = static_cast<Index>(i);
      best_score = score;
    }
  }
  HashCode code;
  code.kind = CodeKind::Index;
  code.length = static_cast<std::uint16_t>(f.hash_length());
  code.value =
      all_zero ? HashCode::kSentinel : static_cast<std::uint64_t>(best);
  return code;
}

int hamming(const HashCode& a, const HashCode& b) {
  if (a.kind != CodeKind::Bits || b.kind != CodeKind::Bits)
    throw std::invalid_argument("hamming: undefined for WTA codes");
  if (a.length != b.length)
    throw std::invalid_argument("hamming: length mismatch");
  return std::popcount(a.value ^ b.value);
}

}  // namespace pghash
