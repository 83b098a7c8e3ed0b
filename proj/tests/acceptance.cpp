// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Everything is seeded and self-contained.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pghash/fed.hpp"
#include "pghash/rng.hpp"
#include "pghash/verify.hpp"

using namespace pghash;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool passed;
  std::string details;
  double seconds;
  double limit_seconds;
};

std::vector<Criterion> g_results;

template <class Fn>
void run_criterion(int id, const std::string& name, double limit_seconds,
                   Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  bool passed = false;
  std::string details;
  try {
    std::tie(passed, details) = fn();
  } catch (const std::exception& e) {
    passed = false;
    details = std::string("exception: ") + e.what();
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (seconds > limit_seconds) {
    passed = false;
    details += " [exceeded time limit]";
  }
  g_results.push_back({id, name, passed, details, seconds, limit_seconds});
  std::printf("[%s] criterion %d: %s — %s (%.1fs / limit %.0fs)\n",
              passed ? "PASS" : "FAIL", id, name.c_str(), details.c_str(),
              seconds, limit_seconds);
  std::fflush(stdout);
}

std::pair<bool, std::string> from_check(const verify::CheckResult& r) {
  return {r.passed, r.details};
}

// Shared desk-scale synthetic benchmark: 5000 train / 500 test points,
// 1000 features, 2000 labels, 2 labels per point, strong signal.
struct Benchmark {
  Dataset train;
  Dataset test;
};

Benchmark make_benchmark() {
  SynthConfig synth;
  synth.num_points = 5500;
  synth.num_features = 1000;
  synth.num_labels = 2000;
  synth.feats_per_point = 16;
  synth.labels_per_point = 2;
  synth.signal_strength = 20.0;
  synth.seed = 42;
  Dataset full = synth_dataset(synth);
  auto [train, test] = split_train_test(full, 0.090909, synth.seed);
  return {std::move(train), std::move(test)};
}

FedConfig base_run_config() {
  FedConfig cfg;
  cfg.hidden_dim = 128;
  cfg.batch_size = 32;
  cfg.lr = 1e-3;
  cfg.seed = 7;
  cfg.eval_every = 0;  // final-round evaluation only
  return cfg;
}

double final_p_at_1(const Ledger& ledger) {
  for (auto it = ledger.rows.rbegin(); it != ledger.rows.rend(); ++it)
    if (it->has_p_at_1) return it->p_at_1;
  return -1.0;
}

std::pair<bool, std::string> criterion_training(const Benchmark& bench) {
  std::ostringstream details;
  bool ok = true;

  // (a) dense single-device training.
  FedConfig dense = base_run_config();
  dense.method = Method::Dense;
  dense.total_steps = 1200;
  Ledger dense_ledger = train_single(dense, bench.train, bench.test);
  const double dense_p = final_p_at_1(dense_ledger);
  const bool a_ok = dense_p >= 0.8;
  ok = ok && a_ok;
  details << "(a) dense P@1 " << dense_p << (a_ok ? " >= 0.8" : " < 0.8 FAIL");

  // (b) compressed run stays within 0.05 of dense.
  FedConfig pruned = base_run_config();
  pruned.method = Method::PGHash;
  pruned.total_steps = 1200;
  pruned.compression_ratio = 0.1;
  pruned.num_tables = 8;
  pruned.hash_length = 6;
  pruned.sketch_dim = 8;
  const double pruned_p = final_p_at_1(train_single(pruned, bench.train, bench.test));
  const bool b_ok = dense_p - pruned_p <= 0.05;
  ok = ok && b_ok;
  details << "; (b) CR=0.1 P@1 " << pruned_p << " (gap "
          << dense_p - pruned_p << (b_ok ? " <= 0.05)" : " > 0.05 FAIL)");

  // (c) hash-based selection beats uniform sampling at an equal budget.
  FedConfig pg = base_run_config();
  pg.method = Method::PGHash;
  pg.total_steps = 300;
  pg.compression_ratio = 1.0;
  pg.num_tables = 50;
  pg.hash_length = 8;
  pg.sketch_dim = 8;
  const double pg_p = final_p_at_1(train_single(pg, bench.train, bench.test));
  FedConfig ss = pg;
  ss.method = Method::SampledSoftmax;
  ss.sampled_fraction = 0.1;
  const double ss_p = final_p_at_1(train_single(ss, bench.train, bench.test));
  const bool c_ok = pg_p >= ss_p;
  ok = ok && c_ok;
  details << "; (c) PGHash " << pg_p << (c_ok ? " >= " : " < ")
          << "sampled-softmax " << ss_p << " at 300 steps"
          << (c_ok ? "" : " FAIL");

  // (d) induced sparsity without compression.
  FedConfig open_cr = pg;
  open_cr.total_steps = 200;
  Ledger sparsity = train_single(open_cr, bench.train, bench.test);
  double min_frac = 1.0;
  long cross_round = -1;
  for (const auto& row : sparsity.rows) {
    if (row.avg_active_frac < min_frac) min_frac = row.avg_active_frac;
    if (cross_round < 0 && row.avg_active_frac < 0.2) cross_round = row.round;
  }
  const bool d_ok = cross_round >= 0;
  ok = ok && d_ok;
  details << "; (d) CR=1 active fraction fell below 0.2 at round "
          << cross_round << " (min " << min_frac << ")"
          << (d_ok ? "" : " never FAIL");
  return {ok, details.str()};
}

class PrivacyAuditor : public TransportMonitor {
 public:
  int leaks = 0;
  long messages = 0;
  Index n = 0;
  Index hidden = 0;

  static bool forbidden(Payload p) {
    return p == Payload::RawSamples || p == Payload::HiddenActivations ||
           p == Payload::InputHashCodes || p == Payload::DeviceHashSeeds;
  }
  void on_weights(Direction dir, Payload p, int, Index, Index) override {
    ++messages;
    if (forbidden(p)) ++leaks;
    if (dir == Direction::DeviceToServer &&
        !(p == Payload::UpdatedPreTarget || p == Payload::UpdatedColumns))
      ++leaks;
  }
  void on_indices(Direction dir, Payload p, int,
                  const std::vector<Index>& idx) override {
    ++messages;
    if (forbidden(p)) ++leaks;
    if (dir == Direction::ServerToDevice) ++leaks;
    if (p == Payload::ThetaIndices) {
      if (!std::is_sorted(idx.begin(), idx.end())) ++leaks;
      for (Index j : idx)
        if (j < 0 || j >= n) ++leaks;
    } else if (p == Payload::SketchRowIndices) {
      for (Index j : idx)
        if (j < 0 || j >= hidden) ++leaks;
    } else {
      ++leaks;
    }
  }
  void on_scalar(Direction, Payload p, int, double) override {
    ++messages;
    if (forbidden(p)) ++leaks;
  }
};

std::pair<bool, std::string> criterion_federated(const Benchmark& bench) {
  std::ostringstream details;
  bool ok = true;

  // One dense device reproduces the single-machine trajectory.
  FedConfig cfg = base_run_config();
  cfg.method = Method::Dense;
  cfg.total_steps = 40;
  cfg.eval_every = 10;
  cfg.num_devices = 1;
  Ledger fed = Simulator::make(cfg, bench.train, bench.test).run();
  Ledger single = train_single(cfg, bench.train, bench.test);
  bool identical = fed.rows.size() == single.rows.size();
  if (identical) {
    for (std::size_t i = 0; i < fed.rows.size(); ++i) {
      identical = identical && fed.rows[i].has_loss == single.rows[i].has_loss &&
                  fed.rows[i].loss == single.rows[i].loss &&
                  fed.rows[i].has_p_at_1 == single.rows[i].has_p_at_1 &&
                  fed.rows[i].p_at_1 == single.rows[i].p_at_1 &&
                  fed.rows[i].avg_active_frac == single.rows[i].avg_active_frac;
    }
  }
  ok = ok && identical;
  details << (identical ? "N=1 dense fed trajectory bit-equals single-machine"
                        : "N=1 dense fed trajectory DIFFERS from single-machine");

  // Four-device pruned run: privacy, memory, and byte invariants.
  FedConfig pg = base_run_config();
  pg.method = Method::PGHash;
  pg.num_devices = 4;
  pg.total_steps = 12;
  pg.compression_ratio = 0.1;
  pg.num_tables = 8;
  pg.hash_length = 6;
  pg.sketch_dim = 8;
  auto sim = Simulator::make(pg, bench.train, bench.test);
  PrivacyAuditor auditor;
  auditor.n = bench.train.meta.num_labels;
  auditor.hidden = pg.hidden_dim;
  sim.set_monitor(&auditor);
  Ledger pg_ledger = sim.run();

  const bool privacy_ok = auditor.messages > 0 && auditor.leaks == 0;
  ok = ok && privacy_ok;
  details << "; privacy double saw " << auditor.messages << " messages, "
          << auditor.leaks << " leaks";

  const Index n = bench.train.meta.num_labels;
  const std::uint64_t cap = static_cast<std::uint64_t>(0.1 * n);
  const std::uint64_t bound =
      static_cast<std::uint64_t>(pg.sketch_dim) * static_cast<std::uint64_t>(n) +
      cap * static_cast<std::uint64_t>(pg.hidden_dim);
  bool memory_ok = true;
  std::uint64_t worst_peak = 0;
  for (int d = 0; d < pg.num_devices; ++d) {
    worst_peak = std::max(worst_peak, sim.device_peak_target_reals(d));
    memory_ok = memory_ok && sim.device_peak_target_reals(d) <= bound;
  }
  ok = ok && memory_ok;
  details << "; device peak target reals " << worst_peak
          << (memory_ok ? " <= " : " > ") << bound;

  FedConfig dense4 = pg;
  dense4.method = Method::Dense;
  Ledger dense_ledger = Simulator::make(dense4, bench.train, bench.test).run();
  bool bytes_ok =
      pg.compression_ratio * pg.hidden_dim * n + pg.sketch_dim * n <
      pg.hidden_dim * n;  // the regime where the invariant applies
  for (std::size_t i = 0; i < pg_ledger.rows.size() && bytes_ok; ++i)
    bytes_ok = pg_ledger.rows[i].bytes_down <= dense_ledger.rows[i].bytes_down;
  ok = ok && bytes_ok;
  details << (bytes_ok ? "; down-bytes <= dense every round"
                       : "; down-bytes EXCEEDED dense");
  return {ok, details.str()};
}

std::pair<bool, std::string> criterion_gradients() {
  const Index d_in = 5, h = 4, n = 6;
  double max_rel = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    Network net(d_in, h, n, derive_seed(500, instance));
    auto rng = make_engine(derive_seed(501, instance));
    std::uniform_int_distribution<Index> feat(0, d_in - 1);
    std::uniform_int_distribution<Index> label(0, n - 1);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    std::vector<SparseExample> batch(2);
    for (auto& ex : batch) {
      ex.features = {{feat(rng), value(rng)}, {feat(rng), value(rng)}};
      std::sort(ex.features.begin(), ex.features.end());
      if (ex.features[0].first == ex.features[1].first) ex.features.pop_back();
      ex.labels = {label(rng)};
    }
    std::vector<std::vector<Index>> sets;
    for (const auto& ex : batch) {
      std::vector<Index> s{ex.labels[0], (ex.labels[0] + 2) % n,
                           (ex.labels[0] + 4) % n};
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
      sets.push_back(s);
    }
    Matrix hidden = net.hidden_batch(batch);
    BatchGrads grads = loss_and_grad(net, batch, hidden, sets);

    auto loss_of = [&](Network& net_ref) {
      Matrix hb = net_ref.hidden_batch(batch);
      return loss_and_grad(net_ref, batch, hb, sets).loss;
    };
    const double eps = 1e-6;
    auto probe = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + eps;
      const double up = loss_of(net);
      param = saved - eps;
      const double down = loss_of(net);
      param = saved;
      const double fd = (up - down) / (2 * eps);
      const double rel = std::abs(analytic - fd) /
                         std::max({1e-6, std::abs(analytic), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    };
    for (Index i = 0; i < d_in; ++i)
      for (Index j = 0; j < h; ++j) probe(net.w1()(i, j), grads.dw1(i, j));
    for (Index j = 0; j < h; ++j) probe(net.b1()[j], grads.db1[j]);
    for (std::size_t s = 0; s < grads.active.size(); ++s) {
      for (Index i = 0; i < h; ++i)
        probe(net.w2()(i, grads.active[s]),
              grads.dw2_active(i, static_cast<Index>(s)));
      probe(net.b2()[grads.active[s]], grads.db2_active[static_cast<Index>(s)]);
    }
  }
  std::ostringstream details;
  details << "max relative error vs central differences = " << max_rel
          << " over 100 instances";
  return {max_rel < 1e-4, details.str()};
}

}  // namespace

int main() {
  verify::VerifyOptions opt;  // acceptance-scale defaults
  run_criterion(1, "fold-sign equivalence", 5.0, [&] {
    return from_check(verify::check_fold_sign_equivalence(opt));
  });
  run_criterion(2, "collision probability and variance", 30.0, [&] {
    auto a = verify::check_collision_probability(opt);
    auto b = verify::check_collision_variance(opt);
    return std::pair{a.passed && b.passed, a.details + "; " + b.details};
  });
  run_criterion(3, "angle-distortion bounds", 60.0, [&] {
    return from_check(verify::check_angle_distortion(opt));
  });
  run_criterion(4, "folded-norm distribution", 10.0, [&] {
    return from_check(verify::check_folded_norm(opt));
  });
  run_criterion(5, "sensitivity scan", 60.0, [&] {
    auto a = verify::check_scan_correlation(opt);
    auto b = verify::check_scan_variance_reduction(opt);
    return std::pair{a.passed && b.passed, a.details + "; " + b.details};
  });

  Benchmark bench = make_benchmark();
  run_criterion(6, "desk-scale training", 600.0,
                [&] { return criterion_training(bench); });
  run_criterion(7, "federated equivalences", 300.0,
                [&] { return criterion_federated(bench); });
  run_criterion(8, "gradient correctness", 10.0, criterion_gradients);

  int failures = 0;
  for (const auto& r : g_results)
    if (!r.passed) ++failures;
  if (failures > 0) {
    std::printf("%d of %zu criteria FAILED\n", failures, g_results.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", g_results.size());
  return 0;
}
