#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pghash/fold.hpp"
#include "pghash/hash.hpp"

namespace pghash {
namespace stats {

// Assumed maximal stretch factor lambda in the angle-distortion bounds.
enum class StretchConvention {
  DimRatio,      // lambda = d / c
  OperatorNorm,  // lambda = sqrt(d / c), the largest singular value
  SpanMax,       // lambda = max |fold(v)| over the scanned circle
};

std::string to_string(StretchConvention c);

struct CollisionEstimate {
  double empirical = 0.0;  // match rate over the single-bit draws
  double predicted = 0.0;  // 1 - theta / pi (folded theta for PGHash)
  double stderr_ = 0.0;    // sqrt(p (1 - p) / N) at the predicted p
};

// Match-rate estimate between x and y over `trials` independently drawn
// single-bit hash functions. `sketch_dim` is used by the PGHash family
// and ignored for SimHash. Per-trial RNG streams derive from
// (seed, trial), so the estimate is schedule-independent.
CollisionEstimate collision_estimate(const Eigen::Ref<const Vector>& x,
                                     const Eigen::Ref<const Vector>& y,
                                     HashKind family, Index sketch_dim,
                                     int trials, std::uint64_t seed);

struct DistortionReport {
  double theta = 0.0;        // half-angle between x and y
  double alpha = 0.0;        // min |fold(v)| over the unit circle in span(x,y)
  double lambda = 0.0;       // assumed max stretch, per convention
  double beta = 0.0;         // alpha / lambda
  double bound_lo = 0.0;
  double bound_hi = 0.0;
  double observed = 0.0;     // cos(fold(x), fold(y))
  bool within_bounds = false;
  StretchConvention convention = StretchConvention::OperatorNorm;
};

// Angle-distortion bounds for the identity-tiling fold of x, y. alpha is
// estimated by scanning `grid_points` equally spaced directions of the
// unit circle in span(x, y). Parallel inputs with cos(x,y) = +1 collapse
// to the trivial report; anti-parallel or numerically degenerate spans
// are rejected.
DistortionReport distortion_bounds(
    const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
    Index sketch_dim, int grid_points,
    StretchConvention convention = StretchConvention::OperatorNorm);

struct FoldedNormStats {
  double mean = 0.0;         // sample mean of |fold(u)|^2
  double stddev = 0.0;       // sample standard deviation
  double ks_distance = 0.0;  // vs the scaled-Beta CDF; meaningless if !ks_defined
  bool ks_defined = false;   // false for c == d (point mass at 1)
  double min_sq = 0.0;
  double max_sq = 0.0;
};

// Distribution of |fold(u)|^2 over `samples` uniform unit vectors in
// R^d, against Beta(c/2, (d-c)/2) scaled to [0, d/c].
FoldedNormStats folded_norm_stats(Index d, Index c, int samples,
                                  std::uint64_t seed);

struct SensitivityScanRow {
  double true_angle = 0.0;   // radians
  double avg_hamming = 0.0;  // mean over tables, in [0, k]
  HashKind family = HashKind::PGHash;
  int tau = 0;
  int k = 0;
  Index c = 0;
  Index d = 0;
};

struct ScanParams {
  Index d = 100;
  int k = 25;
  Index c = 25;
  int tau = 10;
  HashKind family = HashKind::PGHash;
  std::uint64_t seed = 0;
};

// Average Hamming distance between a fixed random unit vector x and a
// companion built at each target angle in a fresh random 2-plane
// through x. Angles must lie in the open interval (0, pi).
std::vector<SensitivityScanRow> angle_hamming_scan(
    const ScanParams& params, const std::vector<double>& angle_grid);

// Header: angle,avg_hamming,family,tau,k,c,d,seed
void write_scan_csv(std::ostream& out,
                    const std::vector<SensitivityScanRow>& rows,
                    std::uint64_t seed);

// Regularized incomplete beta function I_x(a, b).
double regularized_beta(double a, double b, double x);

// CDF at v of |fold(u)|^2 for a (d, c) identity tiling.
double folded_norm_sq_cdf(Index d, Index c, double v);

// Kolmogorov-Smirnov distance between `samples` and a CDF.
double ks_distance(std::vector<double> samples,
                   const std::function<double(double)>& cdf);

// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

double cosine(const Eigen::Ref<const Vector>& x,
              const Eigen::Ref<const Vector>& y);

}  // namespace stats
}  // namespace pghash
