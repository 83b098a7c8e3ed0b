#include "pghash/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "pghash/rng.hpp"

namespace pghash {
namespace stats {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vector gaussian_vector(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

Vector unit_vector(Index d, std::mt19937_64& rng) {
  for (;;) {
    Vector v = gaussian_vector(d, rng);
    double norm = v.norm();
    if (norm > 1e-12) return v / norm;
  }
}

double clamped_cosine(const Vector& x, const Vector& y) {
  double nx = x.norm(), ny = y.norm();
  if (nx == 0.0 || ny == 0.0)
    throw std::invalid_argument("cosine: zero vector (angle undefined)");
  return std::clamp(x.dot(y) / (nx * ny), -1.0, 1.0);
}

bool sign_bit(double t) { return t > 0.0; }

// Continued fraction for the regularized incomplete beta (modified
// Lentz iteration).
double beta_cont_frac(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 3e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

std::string to_string(StretchConvention c) {
  switch (c) {
    case StretchConvention::DimRatio:
      return "dim-ratio";
    case StretchConvention::OperatorNorm:
      return "operator-norm";
    default:
      return "span-max";
  }
}

double cosine(const Eigen::Ref<const Vector>& x,
              const Eigen::Ref<const Vector>& y) {
  Vector xv = x, yv = y;
  return clamped_cosine(xv, yv);
}

CollisionEstimate collision_estimate(const Eigen::Ref<const Vector>& x,
                                     const Eigen::Ref<const Vector>& y,
                                     HashKind family, Index sketch_dim,
                                     int trials, std::uint64_t seed) {
  if (trials < 1)
    throw std::invalid_argument("collision_estimate: trials must be >= 1");
  if (family != HashKind::SimHash && family != HashKind::PGHash)
    throw std::invalid_argument("collision_estimate: bit families only");
  if (x.size() != y.size())
    throw std::invalid_argument("collision_estimate: dimension mismatch");

  Vector xv = x, yv = y;
  if (family == HashKind::PGHash) {
    auto op = FoldingOperator::identity_tiling(x.size(), sketch_dim);
    xv = fold(op, xv);
    yv = fold(op, yv);
  }
  const double theta = std::acos(clamped_cosine(xv, yv));

  int matches = 0;
  const Index dim = xv.size();
  for (int t = 0; t < trials; ++t) {
    auto rng = make_engine(seed, static_cast<std::uint64_t>(t));
    Vector v = gaussian_vector(dim, rng);
    if (sign_bit(v.dot(xv)) == sign_bit(v.dot(yv))) ++matches;
  }

  CollisionEstimate est;
  est.empirical = static_cast<double>(matches) / trials;
  est.predicted = 1.0 - theta / kPi;
  est.stderr_ = std::sqrt(est.predicted * (1.0 - est.predicted) / trials);
  return est;
}

DistortionReport distortion_bounds(const Eigen::Ref<const Vector>& x,
                                   const Eigen::Ref<const Vector>& y,
                                   Index sketch_dim, int grid_points,
                                   StretchConvention convention) {
  if (grid_points < 4)
    throw std::invalid_argument("distortion_bounds: grid too small");
  if (x.size() != y.size())
    throw std::invalid_argument("distortion_bounds: dimension mismatch");
  const Index d = x.size();
  auto op = FoldingOperator::identity_tiling(d, sketch_dim);

  Vector xu = x, yu = y;
  double nx = xu.norm(), ny = yu.norm();
  if (nx == 0.0 || ny == 0.0)
    throw std::invalid_argument("distortion_bounds: zero vector");
  xu /= nx;
  yu /= ny;

  Vector fx = fold(op, xu), fy = fold(op, yu);
  if (fx.norm() < 1e-12 || fy.norm() < 1e-12)
    throw std::invalid_argument("distortion_bounds: input vanishes under folding");

  const double cos_xy = std::clamp(xu.dot(yu), -1.0, 1.0);
  DistortionReport report;
  report.convention = convention;
  report.observed = clamped_cosine(fx, fy);

  if (cos_xy >= 1.0 - 1e-12) {
    // Identical directions: the span degenerates and nothing distorts.
    report.theta = 0.0;
    report.alpha = fx.norm();
    report.lambda = convention == StretchConvention::DimRatio
                        ? static_cast<double>(d) / sketch_dim
                        : (convention == StretchConvention::OperatorNorm
                               ? std::sqrt(static_cast<double>(d) / sketch_dim)
                               : fx.norm());
    report.beta = report.alpha / report.lambda;
    report.bound_lo = report.bound_hi = 1.0;
    report.within_bounds = report.observed >= 1.0 - 1e-9;
    return report;
  }
  if (cos_xy <= -1.0 + 1e-12)
    throw std::invalid_argument("distortion_bounds: anti-parallel inputs (degenerate span)");

  // Orthonormal basis of span(x, y).
  Vector w1 = xu;
  Vector w2 = yu - cos_xy * xu;
  const double w2_norm = w2.norm();
  if (w2_norm < 1e-12)
    throw std::invalid_argument("distortion_bounds: degenerate span");
  w2 /= w2_norm;

  // Linearity lets the circle scan run on the folded basis vectors.
  const Vector f1 = fold(op, w1), f2 = fold(op, w2);
  double alpha = std::numeric_limits<double>::infinity();
  double span_max = 0.0;
  for (int g = 0; g < grid_points; ++g) {
    const double t = 2.0 * kPi * g / grid_points;
    const double norm = (std::cos(t) * f1 + std::sin(t) * f2).norm();
    alpha = std::min(alpha, norm);
    span_max = std::max(span_max, norm);
  }

  report.theta = 0.5 * std::acos(cos_xy);
  report.alpha = alpha;
  switch (convention) {
    case StretchConvention::DimRatio:
      report.lambda = static_cast<double>(d) / sketch_dim;
      break;
    case StretchConvention::OperatorNorm:
      report.lambda = std::sqrt(static_cast<double>(d) / sketch_dim);
      break;
    case StretchConvention::SpanMax:
      report.lambda = span_max;
      break;
  }
  report.beta = report.alpha / report.lambda;

  const double tan2 = std::tan(report.theta) * std::tan(report.theta);
  const double b2 = report.beta * report.beta;
  const double bound_a = (1.0 - b2 * tan2) / (1.0 + b2 * tan2);
  const double bound_b = -(tan2 - b2) / (tan2 + b2);
  report.bound_lo = std::min(bound_a, bound_b);
  report.bound_hi = std::max(bound_a, bound_b);
  report.within_bounds = report.observed >= report.bound_lo - 1e-12 &&
                         report.observed <= report.bound_hi + 1e-12;
  return report;
}

FoldedNormStats folded_norm_stats(Index d, Index c, int samples,
                                  std::uint64_t seed) {
  if (samples < 1)
    throw std::invalid_argument("folded_norm_stats: samples must be >= 1");
  auto op = FoldingOperator::identity_tiling(d, c);

  std::vector<double> sq(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    auto rng = make_engine(seed, static_cast<std::uint64_t>(i));
    Vector u = unit_vector(d, rng);
    sq[static_cast<std::size_t>(i)] = fold(op, u).squaredNorm();
  }

  FoldedNormStats out;
  out.mean = std::accumulate(sq.begin(), sq.end(), 0.0) / samples;
  double ss = 0.0;
  for (double v : sq) ss += (v - out.mean) * (v - out.mean);
  out.stddev = samples > 1 ? std::sqrt(ss / (samples - 1)) : 0.0;
  auto [lo, hi] = std::minmax_element(sq.begin(), sq.end());
  out.min_sq = *lo;
  out.max_sq = *hi;
  if (c == d) {
    out.ks_defined = false;  // point mass at 1
    return out;
  }
  out.ks_defined = true;
  out.ks_distance = ks_distance(
      std::move(sq), [d, c](double v) { return folded_norm_sq_cdf(d, c, v); });
  return out;
}

std::vector<SensitivityScanRow> angle_hamming_scan(
    const ScanParams& params, const std::vector<double>& angle_grid) {
  if (params.family != HashKind::PGHash && params.family != HashKind::SimHash)
    throw std::invalid_argument("angle_hamming_scan: bit families only");
  if (params.tau < 1)
    throw std::invalid_argument("angle_hamming_scan: tau must be >= 1");
  for (double a : angle_grid)
    if (!(a > 0.0 && a < kPi))
      throw std::invalid_argument("angle_hamming_scan: angles must lie in (0, pi)");

  const bool folded = params.family == HashKind::PGHash;
  FoldingOperator op = folded
                           ? FoldingOperator::identity_tiling(params.d, params.c)
                           : FoldingOperator::identity_tiling(params.d, params.d);

  std::vector<HashFunction> functions;
  functions.reserve(static_cast<std::size_t>(params.tau));
  for (int t = 0; t < params.tau; ++t) {
    const std::uint64_t fs = derive_seed(params.seed, 1, static_cast<std::uint64_t>(t));
    functions.push_back(folded ? HashFunction::pghash(params.k, params.c, fs)
                               : HashFunction::simhash(params.k, params.d, fs));
  }

  auto rng = make_engine(params.seed, 0);
  const Vector x = unit_vector(params.d, rng);
  const Vector x_view = folded ? fold(op, x) : x;
  std::vector<HashCode> x_codes;
  x_codes.reserve(functions.size());
  for (const auto& f : functions) x_codes.push_back(f.code(x_view));

  std::vector<SensitivityScanRow> rows;
  rows.reserve(angle_grid.size());
  for (std::size_t i = 0; i < angle_grid.size(); ++i) {
    auto plane_rng =
        make_engine(derive_seed(params.seed, 2, static_cast<std::uint64_t>(i)));
    // Random 2-plane through x: orthogonalize a fresh direction against x.
    Vector ortho;
    for (;;) {
      Vector g = gaussian_vector(params.d, plane_rng);
      ortho = g - g.dot(x) * x;
      const double norm = ortho.norm();
      if (norm > 1e-9) {
        ortho /= norm;
        break;
      }
    }
    const double angle = angle_grid[i];
    const Vector y = std::cos(angle) * x + std::sin(angle) * ortho;
    const Vector y_view = folded ? fold(op, y) : y;

    double total = 0.0;
    for (std::size_t t = 0; t < functions.size(); ++t)
      total += hamming(x_codes[t], functions[t].code(y_view));

    SensitivityScanRow row;
    row.true_angle = angle;
    row.avg_hamming = total / params.tau;
    row.family = params.family;
    row.tau = params.tau;
    row.k = params.k;
    row.c = params.c;
    row.d = params.d;
    rows.push_back(row);
  }
  return rows;
}

void write_scan_csv(std::ostream& out,
                    const std::vector<SensitivityScanRow>& rows,
                    std::uint64_t seed) {
  out << "angle,avg_hamming,family,tau,k,c,d,seed\n";
  for (const auto& r : rows) {
    out << r.true_angle << ',' << r.avg_hamming << ','
        << (r.family == HashKind::PGHash ? "pghash" : "simhash") << ','
        << r.tau << ',' << r.k << ',' << r.c << ',' << r.d << ',' << seed
        << '\n';
  }
}

double regularized_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0)
    throw std::invalid_argument("regularized_beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                          (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cont_frac(a, b, x) / a;
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) -
                        (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b))) *
                   beta_cont_frac(b, a, 1.0 - x) / b;
}

double folded_norm_sq_cdf(Index d, Index c, double v) {
  const double hi = static_cast<double>(d) / c;
  if (v <= 0.0) return 0.0;
  if (v >= hi) return 1.0;
  return regularized_beta(c / 2.0, (d - c) / 2.0, v / hi);
}

double ks_distance(std::vector<double> samples,
                   const std::function<double(double)>& cdf) {
  if (samples.empty())
    throw std::invalid_argument("ks_distance: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double dist = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    dist = std::max(dist, std::abs((i + 1) / n - f));
    dist = std::max(dist, std::abs(i / n - f));
  }
  return dist;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - ma, db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0)
    throw std::invalid_argument("spearman: constant series");
  return cov / std::sqrt(va * vb);
}

}  // namespace stats
}  // namespace pghash
