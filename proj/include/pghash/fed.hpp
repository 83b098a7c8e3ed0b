#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pghash/data.hpp"
#include "pghash/fold.hpp"
#include "pghash/net.hpp"
#include "pghash/sampling.hpp"

namespace pghash {

enum class Method {
  Dense,           // classical dense federated averaging
  PGHash,          // folded sketch + sign-projection tables
  PGHashD,         // device-selected coordinate sketch + WTA tables
  SlideSimHash,    // full weight on device, sign-projection tables
  SlideDwta,       // full weight on device, WTA tables
  SampledSoftmax,  // uniform random activation, no hashing
};

std::string to_string(Method m);
std::optional<Method> method_from_string(const std::string& name);

struct FedConfig {
  Method method = Method::Dense;
  int num_devices = 1;       // N
  long total_steps = 100;    // T
  int steps_per_lsh = 1;     // local steps between re-hash + sync events
  int batch_size = 128;      // M
  int hash_length = 8;       // k
  Index sketch_dim = 8;      // c
  int num_tables = 50;       // tau
  double compression_ratio = 1.0;  // CR
  SamplingStrategy strategy = SamplingStrategy::Vanilla;
  int top_k = 1;
  double hamming_threshold = 0.0;
  double sampled_fraction = 0.1;  // SampledSoftmax activation fraction
  double lr = 1e-4;
  Index hidden_dim = 128;
  bool inject_labels = true;  // union each sample's true labels into its active set
  WtaRule wta_rule = WtaRule::AbsMax;
  long eval_every = 0;        // 0 = evaluate only at the end
  Index eval_subsample = 0;   // 0 = the whole test split
  std::uint64_t seed = 0;
};

// Simulated wire accounting: 8 bytes per real, 8 per index.
enum class Direction { ServerToDevice, DeviceToServer };

enum class Payload {
  PreTargetWeights,  // W1 + b1
  TargetBias,        // full output bias, broadcast with the pre-target weights
  TargetSketch,      // folded / row-selected c x n view of W2
  FullTargetLayer,   // full W2 (dense and SLIDE-style methods)
  ActiveColumns,     // requested columns of W2
  SketchRowIndices,  // device-chosen coordinates (PGHash-D)
  ThetaIndices,      // activated neuron ids
  UpdatedPreTarget,  // W1 + b1 after local steps
  UpdatedColumns,    // active columns (+ bias entries) after local steps
  LossValue,
  // Never transported; enumerated so an information-flow double can
  // assert their absence.
  RawSamples,
  HiddenActivations,
  InputHashCodes,
  DeviceHashSeeds,
};

// Observes every simulated transmission. The default monitor ignores
// them; tests install doubles that audit payload kinds and contents.
class TransportMonitor {
 public:
  virtual ~TransportMonitor() = default;
  virtual void on_weights(Direction, Payload, int /*device*/, Index /*rows*/,
                          Index /*cols*/) {}
  virtual void on_indices(Direction, Payload, int /*device*/,
                          const std::vector<Index>& /*indices*/) {}
  virtual void on_scalar(Direction, Payload, int /*device*/, double /*value*/) {}
};

struct RoundRecord {
  long round = 0;
  Method method = Method::Dense;
  int device_count = 0;
  std::uint64_t bytes_down = 0;  // total across devices
  std::uint64_t bytes_up = 0;
  double avg_active_frac = 0.0;
  double loss = 0.0;
  bool has_loss = false;
  double p_at_1 = 0.0;
  bool has_p_at_1 = false;
  std::vector<Index> activated_per_device;
};

struct Ledger {
  std::vector<RoundRecord> rows;
  // Header: round,method,device_count,bytes_down,bytes_up,avg_active_frac,loss,p_at_1
  void write_csv(std::ostream& out) const;
};

// Near-equal random split; shard sizes differ by at most one.
std::vector<Dataset> partition_iid(const Dataset& dataset, int num_shards,
                                   std::uint64_t seed);

// On-device LSH analysis: builds tau tables over the sketch columns,
// hashes each hidden activation through the matching fold, and returns
// the sampled neuron set plus the per-sample codes used.
struct DeviceLshResult {
  NeuronSet theta;
  std::vector<HashFunction> functions;
  std::vector<HashTable> tables;
  std::vector<std::vector<HashCode>> batch_codes;  // [table][sample]
};
DeviceLshResult device_lsh_analysis(const Eigen::Ref<const Matrix>& hidden,
                                    const Eigen::Ref<const Matrix>& sketch,
                                    const FoldingOperator& fold_op,
                                    const FedConfig& cfg,
                                    std::uint64_t function_seed);

class Device;

// In-process central host + N devices running the distributed pruned
// training protocol: broadcast at LSH boundaries, local updates in
// between, active-weight averaging at window ends.
class Simulator {
 public:
  Simulator(const FedConfig& cfg, std::vector<Dataset> shards, Dataset test_set,
            std::vector<std::uint64_t> device_seeds = {});
  ~Simulator();
  Simulator(Simulator&&) noexcept;
  Simulator& operator=(Simulator&&) noexcept;

  static Simulator make(const FedConfig& cfg, const Dataset& train,
                        Dataset test_set);

  void set_monitor(TransportMonitor* monitor);  // not owned

  RoundRecord run_round(long t);
  Ledger run();

  const Network& server_model() const;
  const FedConfig& config() const;
  double evaluate_p_at_1() const;

  // Inspection hooks for tests and invariants.
  std::uint64_t device_peak_target_reals(int device) const;
  const std::vector<Index>& device_active_set(int device) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Single-machine training loop over the same methods; shares the batch
// and hashing seed streams with device 0 of the simulator so a one-
// device dense federated run reproduces it exactly.
Ledger train_single(const FedConfig& cfg, const Dataset& train,
                    const Dataset& test, Network* final_model = nullptr);

}  // namespace pghash
