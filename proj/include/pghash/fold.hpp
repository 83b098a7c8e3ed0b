#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pghash/rng.hpp"
#include "pghash/types.hpp"

namespace pghash {

enum class FoldKind {
  // Sum of contiguous length-c blocks: out[i] = sum_j x[i + j*c].
  IdentityTiling,
  // First c entries of a permuted copy of x: out[i] = x[perm[i]].
  PermuteTruncate,
};

// Linear sketching operator mapping R^d -> R^c. Immutable after
// construction; shareable across threads.
class FoldingOperator {
 public:
  static FoldingOperator identity_tiling(Index input_dim, Index sketch_dim) {
    check_dims(input_dim, sketch_dim);
    if (input_dim % sketch_dim != 0)
      throw std::invalid_argument(
          "FoldingOperator: sketch_dim must divide input_dim for "
          "identity tiling (zero-pad the input to the next multiple)");
    return FoldingOperator(FoldKind::IdentityTiling, input_dim, sketch_dim,
                           {});
  }

  static FoldingOperator permute_truncate(Index input_dim, Index sketch_dim,
                                          std::vector<Index> permutation) {
    check_dims(input_dim, sketch_dim);
    if (static_cast<Index>(permutation.size()) != input_dim)
      throw std::invalid_argument("FoldingOperator: permutation size != d");
    std::vector<char> seen(static_cast<std::size_t>(input_dim), 0);
    for (Index p : permutation) {
      if (p < 0 || p >= input_dim || seen[static_cast<std::size_t>(p)])
        throw std::invalid_argument(
            "FoldingOperator: permutation is not a bijection on {0..d-1}");
      seen[static_cast<std::size_t>(p)] = 1;
    }
    return FoldingOperator(FoldKind::PermuteTruncate, input_dim, sketch_dim,
                           std::move(permutation));
  }

  static FoldingOperator permute_truncate(Index input_dim, Index sketch_dim,
                                          std::uint64_t seed) {
    std::vector<Index> perm(static_cast<std::size_t>(input_dim));
    std::iota(perm.begin(), perm.end(), Index{0});
    auto rng = make_engine(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    return permute_truncate(input_dim, sketch_dim, std::move(perm));
  }

  FoldKind kind() const { return kind_; }
  Index input_dim() const { return d_; }
  Index sketch_dim() const { return c_; }
  const std::vector<Index>& permutation() const { return perm_; }

  // Dense fold of a single vector. Linear: fold(a*x + b*y) = a*fold(x)
  // + b*fold(y) exactly (same floating-point summation order).
  template <class Derived>
  VectorX<typename Derived::Scalar> apply(
      const Eigen::MatrixBase<Derived>& x) const {
    using Scalar = typename Derived::Scalar;
    if (x.size() != d_)
      throw std::invalid_argument("fold: input length != d");
    if (kind_ == FoldKind::IdentityTiling) {
      VectorX<Scalar> dense = x;
      return dense.reshaped(c_, d_ / c_).rowwise().sum();
    }
    VectorX<Scalar> out(c_);
    for (Index i = 0; i < c_; ++i) out[i] = x[perm_[static_cast<std::size_t>(i)]];
    return out;
  }

  // Sparse fold: accepts (index, value) pairs, returns a dense sketch.
  Vector apply_sparse(
      const std::vector<std::pair<Index, double>>& features) const {
    Vector out = Vector::Zero(c_);
    if (kind_ == FoldKind::IdentityTiling) {
      for (const auto& [idx, val] : features) {
        if (idx < 0 || idx >= d_)
          throw std::invalid_argument("fold: feature index out of range");
        out[idx % c_] += val;
      }
    } else {
      for (const auto& [idx, val] : features) {
        if (idx < 0 || idx >= d_)
          throw std::invalid_argument("fold: feature index out of range");
        Index pos = inverse_perm_[static_cast<std::size_t>(idx)];
        if (pos < c_) out[pos] += val;
      }
    }
    return out;
  }

  // Folds every column of a d x n matrix into a c x n sketch.
  Matrix apply_columns(const Eigen::Ref<const Matrix>& w) const {
    if (w.rows() != d_)
      throw std::invalid_argument("fold: matrix row count != d");
    if (kind_ == FoldKind::IdentityTiling) {
      Matrix out = Matrix::Zero(c_, w.cols());
      for (Index b = 0; b < d_ / c_; ++b) out += w.middleRows(b * c_, c_);
      return out;
    }
    Matrix out(c_, w.cols());
    for (Index i = 0; i < c_; ++i)
      out.row(i) = w.row(perm_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  FoldingOperator(FoldKind kind, Index d, Index c, std::vector<Index> perm)
      : kind_(kind), d_(d), c_(c), perm_(std::move(perm)) {
    if (kind_ == FoldKind::PermuteTruncate) {
      inverse_perm_.assign(static_cast<std::size_t>(d_), 0);
      for (Index i = 0; i < d_; ++i)
        inverse_perm_[static_cast<std::size_t>(perm_[static_cast<std::size_t>(i)])] = i;
    }
  }

  static void check_dims(Index d, Index c) {
    if (d <= 0 || c <= 0)
      throw std::invalid_argument("FoldingOperator: dims must be positive");
    if (c > d)
      throw std::invalid_argument("FoldingOperator: sketch_dim > input_dim");
  }

  FoldKind kind_;
  Index d_;
  Index c_;
  std::vector<Index> perm_;
  std::vector<Index> inverse_perm_;
};

template <class Derived>
VectorX<typename Derived::Scalar> fold(const FoldingOperator& op,
                                       const Eigen::MatrixBase<Derived>& x) {
  return op.apply(x);
}

// Horizontal tiling of a k x c matrix into k x d (d = reps * c). The
// sign pattern of tile(s) * x matches that of s * fold(x) for the
// identity-tiling operator, up to floating-point summation order.
inline Matrix tile(const Eigen::Ref<const Matrix>& s, Index reps) {
  if (reps <= 0) throw std::invalid_argument("tile: reps must be positive");
  Matrix out(s.rows(), s.cols() * reps);
  for (Index b = 0; b < reps; ++b) out.middleCols(b * s.cols(), s.cols()) = s;
  return out;
}

}  // namespace pghash
