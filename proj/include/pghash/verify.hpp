#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pghash/stats.hpp"

namespace pghash {
namespace verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // headline metric
  double threshold = 0.0;  // what it was compared against
  std::string details;
};

struct VerifyOptions {
  // fold-sign equivalence sweep
  int sign_instances = 10000;
  std::vector<std::pair<Index, Index>> sign_dims = {{8, 2}, {100, 25}, {128, 16}};
  int sign_hash_length = 16;
  bool inject_sign_flip = false;  // testing aid: simulates a faulty fold

  // collision probability
  int collision_pairs = 100;
  int collision_draws = 20000;
  Index collision_d = 64;
  Index collision_c = 8;
  int variance_pairs = 3;
  int variance_batches = 50;

  // angle-distortion bounds
  int distortion_pairs = 1000;
  Index distortion_d = 64;
  Index distortion_c = 8;
  int distortion_grid = 10000;

  // folded-norm distribution
  Index norm_d = 128;
  Index norm_c = 16;
  int norm_samples = 100000;

  // periodic-row angle bound
  int row_bound_trials = 1000;
  Index row_d = 100;
  Index row_c = 25;

  // sensitivity scan
  Index scan_d = 100;
  int scan_k = 25;
  Index scan_c = 25;
  int scan_angles = 180;
  double scan_spearman_min = 0.95;
  int scan_var_reps = 20;

  std::uint64_t seed = 0;
};

CheckResult check_fold_sign_equivalence(const VerifyOptions& opt);
CheckResult check_collision_probability(const VerifyOptions& opt);
CheckResult check_collision_variance(const VerifyOptions& opt);
// Also reports (in details) which stretch conventions held everywhere
// and which one was selected.
CheckResult check_angle_distortion(const VerifyOptions& opt);
CheckResult check_folded_norm(const VerifyOptions& opt);
CheckResult check_periodic_row_bound(const VerifyOptions& opt);
CheckResult check_scan_correlation(const VerifyOptions& opt);
CheckResult check_scan_variance_reduction(const VerifyOptions& opt);

std::vector<CheckResult> run_all(const VerifyOptions& opt);

// One human-readable line per check ("[PASS] name ..."), returns
// whether everything passed.
bool print_report(std::ostream& out, const std::vector<CheckResult>& results);
// property,value,threshold,passed
void write_report_csv(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace verify
}  // namespace pghash
