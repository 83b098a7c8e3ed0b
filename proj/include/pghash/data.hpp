#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pghash/types.hpp"

namespace pghash {

// One sparse record: feature (index, value) pairs with strictly
// increasing indices and a sorted label list.
struct SparseExample {
  std::vector<std::pair<Index, double>> features;
  std::vector<Index> labels;
};

struct DatasetMeta {
  Index num_points = 0;
  Index num_features = 0;
  Index num_labels = 0;
  double avg_labels_per_point = 0.0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<SparseExample> examples;
};

// Sparse text format:
//   header line:  num_points num_features num_labels
//   record line:  l1,l2,... i1:v1 i2:v2 ...
// The label field may be empty (line begins with a space). Files ending
// in .gz are read through zlib. Malformed content is reported with its
// line number.
Dataset parse_xc(const std::string& path);

// Inverse of parse_xc; full double precision so a round trip is exact.
void write_xc(const std::string& path, const Dataset& dataset);

struct SynthConfig {
  Index num_points = 1000;
  Index num_features = 256;
  Index num_labels = 64;
  Index feats_per_point = 16;
  Index labels_per_point = 1;
  // Signature values are O(1); additive noise has amplitude
  // 1 / signal_strength. Infinity (or <= 0 treated as error) means no
  // noise at all.
  double signal_strength = 10.0;
  // 0: independent label signatures. Otherwise labels are grouped into
  // this many clusters and share half their signature with their
  // cluster, giving the correlated, confusable label structure typical
  // of extreme multi-label data.
  Index label_clusters = 0;
  std::uint64_t seed = 0;
};

// Seeded synthetic extreme multi-label data. Each label owns a sparse
// random feature signature; an example superposes the signatures of its
// labels plus noise and keeps its top feats_per_point features, so the
// feature -> label mapping stays learnable.
Dataset synth_dataset(const SynthConfig& cfg);

// Seeded-shuffle split; the second part holds round(test_fraction * n).
std::pair<Dataset, Dataset> split_train_test(const Dataset& dataset,
                                             double test_fraction,
                                             std::uint64_t seed);

}  // namespace pghash
