#include "pghash/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "pghash/rng.hpp"

namespace pghash {
namespace verify {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vector gaussian(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

Vector random_unit(Index d, std::uint64_t seed) {
  auto rng = make_engine(seed);
  for (;;) {
    Vector v = gaussian(d, rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

}  // namespace

CheckResult check_fold_sign_equivalence(const VerifyOptions& opt) {
  CheckResult result;
  result.name = "fold_sign_equivalence";
  result.threshold = 0.0;
  long failures = 0;
  long bits_checked = 0;
  const int per_combo =
      opt.sign_instances / static_cast<int>(opt.sign_dims.size());
  for (std::size_t combo = 0; combo < opt.sign_dims.size(); ++combo) {
    const auto [d, c] = opt.sign_dims[combo];
    auto op = FoldingOperator::identity_tiling(d, c);
    for (int i = 0; i < per_combo; ++i) {
      const std::uint64_t s =
          derive_seed(opt.seed, 0x11, combo * 1000003ULL + static_cast<std::uint64_t>(i));
      auto rng = make_engine(s);
      Vector x = gaussian(d, rng);
      Matrix proj(opt.sign_hash_length, c);
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Index r = 0; r < proj.rows(); ++r)
        for (Index cc = 0; cc < c; ++cc) proj(r, cc) = normal(rng);

      Vector lhs = proj * fold(op, x);
      if (opt.inject_sign_flip) lhs = -lhs;
      Vector rhs = tile(proj, d / c) * x;
      for (Index b = 0; b < lhs.size(); ++b) {
        if (std::min(std::abs(lhs[b]), std::abs(rhs[b])) <= 1e-12) continue;
        ++bits_checked;
        if ((lhs[b] > 0.0) != (rhs[b] > 0.0)) ++failures;
      }
    }
  }
  result.value = static_cast<double>(failures);
  result.passed = failures == 0;
  std::ostringstream details;
  details << failures << " sign mismatches over " << bits_checked
          << " bits with projection magnitude > 1e-12";
  result.details = details.str();
  return result;
}

CheckResult check_collision_probability(const VerifyOptions& opt) {
  CheckResult result;
  result.name = "collision_probability";
  int within = 0;
  for (int p = 0; p < opt.collision_pairs; ++p) {
    Vector x = random_unit(opt.collision_d, derive_seed(opt.seed, 0x21, p));
    Vector y = random_unit(opt.collision_d, derive_seed(opt.seed, 0x22, p));
    auto est = stats::collision_estimate(x, y, HashKind::PGHash, opt.collision_c,
                                         opt.collision_draws,
                                         derive_seed(opt.seed, 0x23, p));
    if (std::abs(est.empirical - est.predicted) <= 4.0 * est.stderr_) ++within;
  }
  result.value = within;
  result.threshold = opt.collision_pairs - 1;
  result.passed = within >= opt.collision_pairs - 1;
  std::ostringstream details;
  details << within << "/" << opt.collision_pairs
          << " pairs within 4 sigma of 1 - theta_c/pi";
  result.details = details.str();
  return result;
}

CheckResult check_collision_variance(const VerifyOptions& opt) {
  CheckResult result;
  result.name = "collision_variance";
  result.threshold = 2.0;
  double worst_ratio = 1.0;
  for (int p = 0; p < opt.variance_pairs; ++p) {
    Vector x = random_unit(opt.collision_d, derive_seed(opt.seed, 0x31, p));
    Vector y = random_unit(opt.collision_d, derive_seed(opt.seed, 0x32, p));
    auto probe = stats::collision_estimate(x, y, HashKind::PGHash,
                                           opt.collision_c, 1,
                                           derive_seed(opt.seed, 0x33, p));
    const double mismatch_p = 1.0 - probe.predicted;
    const double predicted_var =
        mismatch_p * (1.0 - mismatch_p) / opt.collision_draws;

    double mean = 0.0, sq = 0.0;
    for (int b = 0; b < opt.variance_batches; ++b) {
      auto est = stats::collision_estimate(
          x, y, HashKind::PGHash, opt.collision_c, opt.collision_draws,
          derive_seed(opt.seed, 0x34, p * 1009 + b));
      const double m = 1.0 - est.empirical;
      mean += m;
      sq += m * m;
    }
    mean /= opt.variance_batches;
    const double var =
        (sq - opt.variance_batches * mean * mean) / (opt.variance_batches - 1);
    const double ratio = var / predicted_var;
    worst_ratio = std::max(worst_ratio, std::max(ratio, 1.0 / ratio));
  }
  result.value = worst_ratio;
  result.passed = worst_ratio < 2.0;
  std::ostringstream details;
  details << "worst batch-variance ratio vs (1/N) p (1-p): " << worst_ratio;
  result.details = details.str();
  return result;
}

CheckResult check_angle_distortion(const VerifyOptions& opt) {
  CheckResult result;
  result.name = "angle_distortion_bounds";
  using stats::StretchConvention;
  int ok_dim_ratio = 0, ok_op_norm = 0, valid = 0;
  for (int p = 0; p < opt.distortion_pairs; ++p) {
    Vector x = random_unit(opt.distortion_d, derive_seed(opt.seed, 0x41, p));
    Vector y = random_unit(opt.distortion_d, derive_seed(opt.seed, 0x42, p));
    try {
      auto a = stats::distortion_bounds(x, y, opt.distortion_c,
                                        opt.distortion_grid,
                                        StretchConvention::DimRatio);
      auto b = stats::distortion_bounds(x, y, opt.distortion_c,
                                        opt.distortion_grid,
                                        StretchConvention::OperatorNorm);
      ++valid;
      if (a.within_bounds) ++ok_dim_ratio;
      if (b.within_bounds) ++ok_op_norm;
    } catch (const std::invalid_argument&) {
      // Degenerate draw; not a valid instance.
    }
  }
  const bool dim_ratio_all = ok_dim_ratio == valid;
  const bool op_norm_all = ok_op_norm == valid;
  // The tighter operator-norm convention is selected when it holds
  // everywhere; the dim-ratio bound is the fallback.
  const char* chosen = op_norm_all ? "operator-norm (sqrt(d/c))"
                                   : (dim_ratio_all ? "dim-ratio (d/c)" : "none");
  result.value = op_norm_all ? ok_op_norm : ok_dim_ratio;
  result.threshold = valid;
  result.passed = valid > 0 && (op_norm_all || dim_ratio_all);
  std::ostringstream details;
  details << "containment " << ok_op_norm << "/" << valid
          << " under operator-norm, " << ok_dim_ratio << "/" << valid
          << " under dim-ratio; chosen convention: " << chosen;
  result.details = details.str();
  return result;
}

CheckResult check_folded_norm(const VerifyOptions& opt) {
  CheckResult result;
  result.name = "folded_norm_distribution";
  auto s = stats::folded_norm_stats(opt.norm_d, opt.norm_c, opt.norm_samples,
                                    derive_seed(opt.seed, 0x51));
  const double hi = static_cast<double>(opt.norm_d) / opt.norm_c;
  // 0.01 is the pinned threshold at the reference sample count (1e5);
  // smaller runs fall back to statistical quantiles: the 99.9% KS
  // quantile and a 5-sigma band around the mean.
  const double ks_threshold =
      std::max(0.01, 1.95 / std::sqrt(static_cast<double>(opt.norm_samples)));
  const double mean_threshold = std::max(
      0.01, 5.0 * s.stddev / std::sqrt(static_cast<double>(opt.norm_samples)));
  const bool mean_ok = std::abs(s.mean - 1.0) < mean_threshold;
  const bool ks_ok = !s.ks_defined || s.ks_distance < ks_threshold;
  const bool support_ok = s.min_sq >= 0.0 && s.max_sq <= hi;
  result.value = s.ks_defined ? s.ks_distance : 0.0;
  result.threshold = ks_threshold;
  result.passed = mean_ok && ks_ok && support_ok;
  std::ostringstream details;
  details << "mean " << s.mean << " (|mean-1| < 0.01), KS "
          << (s.ks_defined ? s.ks_distance : 0.0) << " vs scaled Beta(c/2,(d-c)/2)"
          << ", support [" << s.min_sq << ", " << s.max_sq << "] in [0, " << hi
          << "]";
  result.details = details.str();
  return result;
}

CheckResult check_periodic_row_bound(const VerifyOptions& opt) {
  CheckResult result;
  result.name = "periodic_row_angle_bound";
  result.threshold = 0.0;
  auto op = FoldingOperator::identity_tiling(opt.row_d, opt.row_c);
  const double scale = std::sqrt(static_cast<double>(opt.row_c) / opt.row_d);
  int violations = 0;
  for (int t = 0; t < opt.row_bound_trials; ++t) {
    auto rng = make_engine(derive_seed(opt.seed, 0x61, t));
    Vector row_c = gaussian(opt.row_c, rng);
    Vector row_d = tile(row_c.transpose(), opt.row_d / opt.row_c).row(0).transpose();
    Vector x = gaussian(opt.row_d, rng);
    const double lhs = std::abs(row_d.dot(x) / (row_d.norm() * x.norm()));
    const double rhs = scale * fold(op, x).norm() / x.norm();
    if (lhs > rhs + 1e-12) ++violations;
  }
  result.value = violations;
  result.passed = violations == 0;
  std::ostringstream details;
  details << violations << "/" << opt.row_bound_trials
          << " violations of |cos(row, x)| <= sqrt(c/d) |fold(x)| / |x|";
  result.details = details.str();
  return result;
}

namespace {

std::vector<double> angle_grid(int points) {
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(points));
  for (int i = 1; i <= points; ++i)
    grid.push_back(kPi * i / (points + 1));
  return grid;
}

}  // namespace

CheckResult check_scan_correlation(const VerifyOptions& opt) {
  CheckResult result;
  result.name = "scan_spearman_correlation";
  stats::ScanParams params;
  params.d = opt.scan_d;
  params.k = opt.scan_k;
  params.c = opt.scan_c;
  params.tau = 100;
  params.family = HashKind::PGHash;
  params.seed = derive_seed(opt.seed, 0x71);
  auto rows = stats::angle_hamming_scan(params, angle_grid(opt.scan_angles));
  std::vector<double> angles, hammings;
  for (const auto& r : rows) {
    angles.push_back(r.true_angle);
    hammings.push_back(r.avg_hamming);
  }
  const double rho = stats::spearman(angles, hammings);
  result.value = rho;
  result.threshold = opt.scan_spearman_min;
  result.passed = rho >= opt.scan_spearman_min;
  std::ostringstream details;
  details << "Spearman(angle, avg Hamming) = " << rho << " at tau=100 over "
          << opt.scan_angles << " angles";
  result.details = details.str();
  return result;
}

CheckResult check_scan_variance_reduction(const VerifyOptions& opt) {
  CheckResult result;
  result.name = "scan_variance_reduction";
  const std::vector<double> probe_angles{kPi / 6, kPi / 3, kPi / 2,
                                         2 * kPi / 3};
  auto variance_at = [&](int tau) {
    double total = 0.0;
    for (std::size_t a = 0; a < probe_angles.size(); ++a) {
      double mean = 0.0, sq = 0.0;
      for (int rep = 0; rep < opt.scan_var_reps; ++rep) {
        stats::ScanParams params;
        params.d = opt.scan_d;
        params.k = opt.scan_k;
        params.c = opt.scan_c;
        params.tau = tau;
        params.family = HashKind::PGHash;
        params.seed = derive_seed(opt.seed, 0x81 + a, rep);
        auto rows = stats::angle_hamming_scan(params, {probe_angles[a]});
        mean += rows[0].avg_hamming;
        sq += rows[0].avg_hamming * rows[0].avg_hamming;
      }
      mean /= opt.scan_var_reps;
      total += (sq - opt.scan_var_reps * mean * mean) / (opt.scan_var_reps - 1);
    }
    return total / static_cast<double>(probe_angles.size());
  };
  const double var10 = variance_at(10);
  const double var100 = variance_at(100);
  result.value = var100;
  result.threshold = var10;
  result.passed = var100 < var10;
  std::ostringstream details;
  details << "avg Hamming variance at fixed angles: " << var10
          << " (tau=10) -> " << var100 << " (tau=100)";
  result.details = details.str();
  return result;
}

std::vector<CheckResult> run_all(const VerifyOptions& opt) {
  return {
      check_fold_sign_equivalence(opt), check_collision_probability(opt),
      check_collision_variance(opt),    check_angle_distortion(opt),
      check_folded_norm(opt),           check_periodic_row_bound(opt),
      check_scan_correlation(opt),      check_scan_variance_reduction(opt),
  };
}

bool print_report(std::ostream& out, const std::vector<CheckResult>& results) {
  bool all = true;
  for (const auto& r : results) {
    out << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.details
        << "\n";
    all = all && r.passed;
  }
  return all;
}

void write_report_csv(std::ostream& out,
                      const std::vector<CheckResult>& results) {
  out << "property,value,threshold,passed\n";
  for (const auto& r : results)
    out << r.name << ',' << r.value << ',' << r.threshold << ','
        << (r.passed ? 1 : 0) << '\n';
}

}  // namespace verify
}  // namespace pghash
