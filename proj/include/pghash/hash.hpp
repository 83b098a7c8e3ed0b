#pragma once

#include <bit>
#include <cstdint>
#include <limits>
#include <vector>

#include "pghash/types.hpp"

namespace pghash {

enum class HashKind { PGHash, SimHash, DWTA, PGHashD };

// Argmax rule for the winner-take-all families.
enum class WtaRule { Max, AbsMax };

enum class CodeKind : std::uint8_t { Bits, Index };

// A single hash output: k packed sign bits for the projection families,
// or the winning coordinate position (in {0..k-1}) for the WTA families.
struct HashCode {
  static constexpr std::uint64_t kSentinel =
      std::numeric_limits<std::uint64_t>::max();

  std::uint64_t value = 0;
  std::uint16_t length = 0;  // k
  CodeKind kind = CodeKind::Bits;

  bool bit(int i) const { return (value >> i) & 1u; }
  bool is_sentinel() const {
    return kind == CodeKind::Index && value == kSentinel;
  }

  friend bool operator==(const HashCode&, const HashCode&) = default;
};

// One randomly drawn hash function. Construction is a pure function of
// (kind, k, dim, seed): the same seed reproduces the projection
// bit-exactly. Immutable afterwards.
class HashFunction {
 public:
  // k x c Gaussian applied to folded inputs.
  static HashFunction pghash(int k, Index sketch_dim, std::uint64_t seed);
  // k x d Gaussian applied to full-width inputs.
  static HashFunction simhash(int k, Index dim, std::uint64_t seed);
  // k distinct coordinates of the full input; code = winning position.
  static HashFunction dwta(int k, Index dim, std::uint64_t seed,
                           WtaRule rule = WtaRule::AbsMax);
  // k distinct coordinates of the folded input.
  static HashFunction pghash_d(int k, Index sketch_dim, std::uint64_t seed,
                               WtaRule rule = WtaRule::AbsMax);
  // Bypasses the Gaussian draw; used by tests to pin the projection.
  static HashFunction with_projection(HashKind kind, Matrix projection);

  HashKind kind() const { return kind_; }
  int hash_length() const { return k_; }
  // Expected length of hashed vectors (c for folded families, d else).
  Index input_dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  WtaRule wta_rule() const { return rule_; }
  bool is_bit_family() const {
    return kind_ == HashKind::PGHash || kind_ == HashKind::SimHash;
  }
  const Matrix& projection() const { return projection_; }
  const std::vector<Index>& selected_coords() const { return coords_; }

  // Hashes one already-folded (or full-width, per kind) vector.
  HashCode code(const Eigen::Ref<const Vector>& v) const;

 private:
  HashFunction() = default;

  HashKind kind_ = HashKind::SimHash;
  int k_ = 0;
  Index dim_ = 0;
  std::uint64_t seed_ = 0;
  WtaRule rule_ = WtaRule::AbsMax;
  Matrix projection_;          // bit families
  std::vector<Index> coords_;  // WTA families
};

// Sign pattern of projection * x packed into a word, lowest bit first.
// sgn(t) is 1 for t > 0 and 0 otherwise.
HashCode pghash_code(const HashFunction& f, const Eigen::Ref<const Vector>& folded);
HashCode simhash_code(const HashFunction& f, const Eigen::Ref<const Vector>& x);
// Winning position among the k selected coordinates; SENTINEL when every
// selected entry is exactly zero.
HashCode wta_code(const HashFunction& f, const Eigen::Ref<const Vector>& v);

// Popcount of XOR. Defined for bit codes only; WTA codes compare by
// equality alone.
int hamming(const HashCode& a, const HashCode& b);

}  // namespace pghash
