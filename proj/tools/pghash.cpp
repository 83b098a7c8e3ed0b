// Command-line front end: sensitivity scans, statistical verification,
// single-machine and federated training runs, synthetic data generation.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pghash/fed.hpp"
#include "pghash/stats.hpp"
#include "pghash/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pghash;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitUsage = 2;

void write_manifest(const fs::path& out_dir, const json& manifest) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

struct ScanArgs {
  Index d = 100;
  int k = 25;
  std::vector<Index> c = {25};
  std::vector<int> tau = {10, 100};
  std::vector<std::string> families = {"pghash", "simhash"};
  int angles = 180;
  std::uint64_t seed = 0;
  std::string out_dir = "scan-out";
};

int run_scan(const ScanArgs& args) {
  json manifest = {{"command", "scan"},     {"d", args.d},
                   {"k", args.k},           {"c", args.c},
                   {"tau", args.tau},       {"families", args.families},
                   {"angles", args.angles}, {"seed", args.seed}};
  write_manifest(args.out_dir, manifest);

  std::vector<double> grid;
  for (int i = 1; i <= args.angles; ++i)
    grid.push_back(M_PI * i / (args.angles + 1));

  for (const auto& family : args.families) {
    const bool pg = family == "pghash";
    if (!pg && family != "simhash") {
      std::cerr << "scan: unknown family '" << family << "'\n";
      return kExitUsage;
    }
    for (int tau : args.tau) {
      for (Index c : args.c) {
        stats::ScanParams params;
        params.d = args.d;
        params.k = args.k;
        params.c = pg ? c : args.d;
        params.tau = tau;
        params.family = pg ? HashKind::PGHash : HashKind::SimHash;
        params.seed = args.seed;
        auto rows = stats::angle_hamming_scan(params, grid);
        std::ostringstream name;
        name << "scan_" << family << "_tau" << tau << "_c" << params.c << ".csv";
        std::ofstream csv(fs::path(args.out_dir) / name.str());
        stats::write_scan_csv(csv, rows, args.seed);
        std::cout << "wrote " << (fs::path(args.out_dir) / name.str()).string()
                  << "\n";
        if (!pg) break;  // c does not vary for full-width hashing
      }
    }
  }
  return kExitOk;
}

int run_verify(const verify::VerifyOptions& opt, const std::string& out_dir) {
  json manifest = {{"command", "verify"},
                   {"sign_instances", opt.sign_instances},
                   {"collision_pairs", opt.collision_pairs},
                   {"collision_draws", opt.collision_draws},
                   {"distortion_pairs", opt.distortion_pairs},
                   {"distortion_grid", opt.distortion_grid},
                   {"norm_d", opt.norm_d},
                   {"norm_c", opt.norm_c},
                   {"norm_samples", opt.norm_samples},
                   {"scan_angles", opt.scan_angles},
                   {"inject_sign_flip", opt.inject_sign_flip},
                   {"seed", opt.seed}};
  write_manifest(out_dir, manifest);

  auto results = verify::run_all(opt);
  const bool ok = verify::print_report(std::cout, results);
  {
    std::ofstream txt(fs::path(out_dir) / "report.txt");
    verify::print_report(txt, results);
    std::ofstream csv(fs::path(out_dir) / "report.csv");
    verify::write_report_csv(csv, results);
  }
  if (!ok) {
    for (const auto& r : results)
      if (!r.passed) std::cerr << "verification failed: " << r.name << "\n";
    return kExitVerificationFailure;
  }
  return kExitOk;
}

struct RunArgs {
  FedConfig cfg;
  std::string method = "pghash";
  std::string strategy = "vanilla";
  std::string wta_rule = "abs-max";
  std::string dataset;
  std::string test_path;
  std::string out_dir = "run-out";
  std::string config_path;
};

// key=value run configuration ('#' starts a comment). Schema:
//   method, N, T, M, k, c, tau, CR, steps_per_lsh, lr, seed, dataset,
//   eval_every
// Command-line flags take precedence over file values.
void apply_config_file(const std::string& path, RunArgs& args, CLI::App* cmd,
                       bool federated) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  auto overridden = [&](const std::string& flag) {
    return cmd->count(flag) > 0;
  };
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto bad = [&](const std::string& why) {
      return std::invalid_argument(path + ":" + std::to_string(line_no) + ": " +
                                   why);
    };
    auto as_long = [&] {
      try {
        return std::stol(value);
      } catch (...) {
        throw bad("expected an integer for " + key);
      }
    };
    auto as_double = [&] {
      try {
        return std::stod(value);
      } catch (...) {
        throw bad("expected a number for " + key);
      }
    };
    if (key == "method") {
      if (!overridden("--method")) args.method = value;
    } else if (key == "N") {
      if (!federated) throw bad("N applies to the fed subcommand only");
      if (!overridden("--N")) args.cfg.num_devices = static_cast<int>(as_long());
    } else if (key == "T") {
      if (!overridden("--T")) args.cfg.total_steps = as_long();
    } else if (key == "M") {
      if (!overridden("--M")) args.cfg.batch_size = static_cast<int>(as_long());
    } else if (key == "k") {
      if (!overridden("--k")) args.cfg.hash_length = static_cast<int>(as_long());
    } else if (key == "c") {
      if (!overridden("--c")) args.cfg.sketch_dim = as_long();
    } else if (key == "tau") {
      if (!overridden("--tau")) args.cfg.num_tables = static_cast<int>(as_long());
    } else if (key == "CR") {
      if (!overridden("--CR")) args.cfg.compression_ratio = as_double();
    } else if (key == "steps_per_lsh") {
      if (!overridden("--steps_per_lsh"))
        args.cfg.steps_per_lsh = static_cast<int>(as_long());
    } else if (key == "lr") {
      if (!overridden("--lr")) args.cfg.lr = as_double();
    } else if (key == "seed") {
      if (!overridden("--seed"))
        args.cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    } else if (key == "dataset") {
      if (!overridden("--dataset")) args.dataset = value;
    } else if (key == "eval_every") {
      if (!overridden("--eval_every")) args.cfg.eval_every = as_long();
    } else {
      throw bad("unknown config key '" + key + "'");
    }
  }
}

std::optional<FedConfig> resolve_run_config(RunArgs& args) {
  auto method = method_from_string(args.method);
  if (!method) {
    std::cerr << "unknown method '" << args.method << "'\n";
    return std::nullopt;
  }
  args.cfg.method = *method;
  if (args.strategy == "vanilla") {
    args.cfg.strategy = SamplingStrategy::Vanilla;
  } else if (args.strategy == "hamming-topk") {
    args.cfg.strategy = SamplingStrategy::HammingTopK;
  } else if (args.strategy == "hamming-threshold") {
    args.cfg.strategy = SamplingStrategy::HammingThreshold;
  } else {
    std::cerr << "unknown strategy '" << args.strategy << "'\n";
    return std::nullopt;
  }
  if (args.wta_rule == "abs-max") {
    args.cfg.wta_rule = WtaRule::AbsMax;
  } else if (args.wta_rule == "max") {
    args.cfg.wta_rule = WtaRule::Max;
  } else {
    std::cerr << "unknown wta rule '" << args.wta_rule << "'\n";
    return std::nullopt;
  }
  return args.cfg;
}

json run_manifest(const char* command, const RunArgs& args, const FedConfig& cfg) {
  return {{"command", command},
          {"method", to_string(cfg.method)},
          {"N", cfg.num_devices},
          {"T", cfg.total_steps},
          {"M", cfg.batch_size},
          {"k", cfg.hash_length},
          {"c", cfg.sketch_dim},
          {"tau", cfg.num_tables},
          {"CR", cfg.compression_ratio},
          {"steps_per_lsh", cfg.steps_per_lsh},
          {"lr", cfg.lr},
          {"hidden", cfg.hidden_dim},
          {"strategy", args.strategy},
          {"wta_rule", args.wta_rule},
          {"inject_labels", cfg.inject_labels},
          {"sampled_fraction", cfg.sampled_fraction},
          {"eval_every", cfg.eval_every},
          {"eval_subsample", cfg.eval_subsample},
          {"dataset", args.dataset},
          {"test", args.test_path},
          {"seed", cfg.seed}};
}

int run_training(const char* command, RunArgs& args, CLI::App* cmd,
                 bool federated) {
  if (!args.config_path.empty())
    apply_config_file(args.config_path, args, cmd, federated);
  if (args.dataset.empty()) {
    std::cerr << "a training file is required (--dataset or a config file)\n";
    return kExitUsage;
  }
  auto cfg = resolve_run_config(args);
  if (!cfg) return kExitUsage;
  if (!federated) cfg->num_devices = 1;

  Dataset train = parse_xc(args.dataset);
  Dataset test;
  if (!args.test_path.empty()) {
    test = parse_xc(args.test_path);
  } else {
    auto split = split_train_test(train, 0.1, cfg->seed);
    train = std::move(split.first);
    test = std::move(split.second);
    std::cout << "no --test given; held out " << test.examples.size()
              << " examples (seeded 90/10 split)\n";
  }

  write_manifest(args.out_dir, run_manifest(command, args, *cfg));

  Ledger ledger;
  Network final_model(1, 1, 1, 0);
  if (federated) {
    auto sim = Simulator::make(*cfg, train, test);
    ledger = sim.run();
    final_model = sim.server_model();
  } else {
    ledger = train_single(*cfg, train, test, &final_model);
  }

  {
    std::ofstream csv(fs::path(args.out_dir) / "ledger.csv");
    ledger.write_csv(csv);
  }
  Adam opt(final_model, AdamConfig{.lr = cfg->lr});
  save_checkpoint((fs::path(args.out_dir) / "checkpoint.bin").string(),
                  final_model, opt);

  for (auto it = ledger.rows.rbegin(); it != ledger.rows.rend(); ++it) {
    if (it->has_p_at_1) {
      std::cout << "final P@1 = " << it->p_at_1 << " (round " << it->round
                << ")\n";
      break;
    }
  }
  std::cout << "wrote " << (fs::path(args.out_dir) / "ledger.csv").string()
            << "\n";
  return kExitOk;
}

struct GenArgs {
  SynthConfig cfg;
  double test_fraction = 0.1;
  std::string out_dir = "data-out";
};

int run_gen_data(const GenArgs& args) {
  json manifest = {{"command", "gen-data"},
                   {"points", args.cfg.num_points},
                   {"features", args.cfg.num_features},
                   {"labels", args.cfg.num_labels},
                   {"feats_per_point", args.cfg.feats_per_point},
                   {"labels_per_point", args.cfg.labels_per_point},
                   {"signal_strength", args.cfg.signal_strength},
                   {"label_clusters", args.cfg.label_clusters},
                   {"test_fraction", args.test_fraction},
                   {"seed", args.cfg.seed}};
  write_manifest(args.out_dir, manifest);

  Dataset full = synth_dataset(args.cfg);
  auto [train, test] = split_train_test(full, args.test_fraction, args.cfg.seed);
  write_xc((fs::path(args.out_dir) / "train.txt").string(), train);
  write_xc((fs::path(args.out_dir) / "test.txt").string(), test);
  std::cout << "wrote " << train.examples.size() << " train / "
            << test.examples.size() << " test examples under " << args.out_dir
            << "\n";
  return kExitOk;
}

void add_run_options(CLI::App* cmd, RunArgs& args, bool federated) {
  cmd->add_option("--config", args.config_path,
                  "key=value run configuration file (flags take precedence)");
  cmd->add_option("--method", args.method,
                  "dense | pghash | pghash-d | slide-simhash | slide-dwta | "
                  "sampled-softmax");
  if (federated)
    cmd->add_option("--N,--devices", args.cfg.num_devices, "device count")
        ->check(CLI::PositiveNumber);
  cmd->add_option("--T,--steps", args.cfg.total_steps, "training rounds")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--M,--batch", args.cfg.batch_size, "batch size")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--k", args.cfg.hash_length, "hash length");
  cmd->add_option("--c", args.cfg.sketch_dim, "sketch dimension");
  cmd->add_option("--tau,--tables", args.cfg.num_tables, "hash tables")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--CR,--cr", args.cfg.compression_ratio,
                  "compression ratio in (0, 1]");
  cmd->add_option("--steps_per_lsh,--steps-per-lsh", args.cfg.steps_per_lsh,
                  "local steps between re-hash + sync events")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lr", args.cfg.lr, "learning rate");
  cmd->add_option("--hidden", args.cfg.hidden_dim, "hidden layer width");
  cmd->add_option("--strategy", args.strategy,
                  "vanilla | hamming-topk | hamming-threshold");
  cmd->add_option("--top-k", args.cfg.top_k, "hamming-topk neighbor count");
  cmd->add_option("--beta", args.cfg.hamming_threshold,
                  "hamming-threshold distance bound");
  cmd->add_option("--fraction", args.cfg.sampled_fraction,
                  "sampled-softmax activation fraction");
  cmd->add_option("--wta-rule", args.wta_rule, "abs-max | max");
  cmd->add_flag("!--no-inject-labels", args.cfg.inject_labels,
                "disable true-label injection into active sets");
  cmd->add_option("--eval_every,--eval-every", args.cfg.eval_every,
                  "evaluation cadence in rounds (0: final round only)");
  cmd->add_option("--eval-subsample", args.cfg.eval_subsample,
                  "test examples per evaluation (0: all)");
  cmd->add_option("--seed", args.cfg.seed, "master seed");
  cmd->add_option("--dataset", args.dataset, "sparse-format training file");
  cmd->add_option("--test", args.test_path, "sparse-format test file");
  cmd->add_option("--out", args.out_dir, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PGHash-family LSH toolkit and federated training simulator"};
  app.require_subcommand(1);

  ScanArgs scan_args;
  auto* scan = app.add_subcommand("scan", "angle vs Hamming sensitivity scans");
  scan->add_option("--d", scan_args.d, "vector dimension");
  scan->add_option("--k", scan_args.k, "hash length");
  scan->add_option("--c", scan_args.c, "sketch dimensions (list)");
  scan->add_option("--tau", scan_args.tau, "table counts (list)");
  scan->add_option("--family", scan_args.families, "pghash and/or simhash");
  scan->add_option("--angles", scan_args.angles, "angle grid size")
      ->check(CLI::PositiveNumber);
  scan->add_option("--seed", scan_args.seed, "master seed");
  scan->add_option("--out", scan_args.out_dir, "output directory");

  verify::VerifyOptions vopt;
  std::string verify_out = "verify-out";
  std::string fault = "none";
  auto* ver = app.add_subcommand("verify", "statistical property suite");
  ver->add_option("--samples", vopt.norm_samples, "folded-norm sample count");
  ver->add_option("--d", vopt.norm_d, "folded-norm input dimension");
  ver->add_option("--c", vopt.norm_c, "folded-norm sketch dimension");
  ver->add_option("--sign-instances", vopt.sign_instances,
                  "fold-sign equivalence instances");
  ver->add_option("--pairs", vopt.collision_pairs, "collision test pairs");
  ver->add_option("--trials", vopt.collision_draws, "single-bit draws per pair");
  ver->add_option("--distortion-pairs", vopt.distortion_pairs,
                  "angle-distortion pairs");
  ver->add_option("--grid", vopt.distortion_grid, "circle-scan grid points");
  ver->add_option("--seed", vopt.seed, "master seed");
  ver->add_option("--out", verify_out, "output directory");
  ver->add_option("--inject-fault", fault,
                  "testing aid: none | fold-sign (forces a failure)");

  RunArgs train_args;
  auto* train = app.add_subcommand("train", "single-machine training run");
  add_run_options(train, train_args, false);

  RunArgs fed_args;
  auto* fed = app.add_subcommand("fed", "federated training simulation");
  add_run_options(fed, fed_args, true);

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--points", gen_args.cfg.num_points)->check(CLI::PositiveNumber);
  gen->add_option("--features", gen_args.cfg.num_features)->check(CLI::PositiveNumber);
  gen->add_option("--labels", gen_args.cfg.num_labels)->check(CLI::PositiveNumber);
  gen->add_option("--feats-per-point", gen_args.cfg.feats_per_point);
  gen->add_option("--labels-per-point", gen_args.cfg.labels_per_point);
  gen->add_option("--signal", gen_args.cfg.signal_strength,
                  "signal strength (noise amplitude is its inverse)");
  gen->add_option("--clusters", gen_args.cfg.label_clusters,
                  "label clusters sharing half their signature (0: none)");
  gen->add_option("--test-fraction", gen_args.test_fraction);
  gen->add_option("--seed", gen_args.cfg.seed);
  gen->add_option("--out", gen_args.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (scan->parsed()) return run_scan(scan_args);
    if (ver->parsed()) {
      if (fault == "fold-sign") {
        vopt.inject_sign_flip = true;
      } else if (fault != "none") {
        std::cerr << "unknown fault '" << fault << "'\n";
        return kExitUsage;
      }
      return run_verify(vopt, verify_out);
    }
    if (train->parsed()) return run_training("train", train_args, train, false);
    if (fed->parsed()) return run_training("fed", fed_args, fed, true);
    if (gen->parsed()) return run_gen_data(gen_args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
