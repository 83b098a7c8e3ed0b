#include "pghash/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pghash/rng.hpp"

namespace pghash {

namespace {

[[noreturn]] void fail(const std::string& path, long line,
                       const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

// Line reader over plain or gzip-compressed files.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path) {
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
      gz_ = gzopen(path.c_str(), "rb");
      if (!gz_) throw std::runtime_error("cannot open " + path);
    } else {
      plain_.open(path);
      if (!plain_) throw std::runtime_error("cannot open " + path);
    }
  }
  ~LineReader() {
    if (gz_) gzclose(gz_);
  }
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;

  bool next(std::string& line) {
    if (!gz_) return static_cast<bool>(std::getline(plain_, line));
    line.clear();
    char buf[1 << 14];
    for (;;) {
      if (gzgets(gz_, buf, sizeof(buf)) == nullptr)
        return !line.empty();
      line += buf;
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        return true;
      }
    }
  }

 private:
  std::string path_;
  std::ifstream plain_;
  gzFile gz_ = nullptr;
};

bool parse_index(const char*& p, Index& out) {
  char* end = nullptr;
  long long v = std::strtoll(p, &end, 10);
  if (end == p) return false;
  p = end;
  out = static_cast<Index>(v);
  return true;
}

bool parse_double(const char*& p, double& out) {
  char* end = nullptr;
  out = std::strtod(p, &end);
  if (end == p) return false;
  p = end;
  return true;
}

}  // namespace

Dataset parse_xc(const std::string& path) {
  LineReader reader(path);
  std::string line;
  long line_no = 0;

  if (!reader.next(line)) fail(path, 1, "missing header line");
  ++line_no;
  Dataset ds;
  {
    const char* p = line.c_str();
    if (!parse_index(p, ds.meta.num_points) ||
        !parse_index(p, ds.meta.num_features) ||
        !parse_index(p, ds.meta.num_labels))
      fail(path, line_no, "header must be 'num_points num_features num_labels'");
    while (*p == ' ' || *p == '\r') ++p;
    if (*p != '\0') fail(path, line_no, "trailing tokens in header");
    if (ds.meta.num_points < 0 || ds.meta.num_features <= 0 ||
        ds.meta.num_labels <= 0)
      fail(path, line_no, "header dimensions must be positive");
  }

  ds.examples.reserve(static_cast<std::size_t>(ds.meta.num_points));
  long long total_labels = 0;
  while (reader.next(line)) {
    ++line_no;
    if (static_cast<Index>(ds.examples.size()) == ds.meta.num_points) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      fail(path, line_no, "more records than declared in the header");
    }
    SparseExample ex;
    const char* p = line.c_str();

    // Label field: comma-separated indices, possibly empty.
    if (*p != ' ' && *p != '\0') {
      for (;;) {
        Index label;
        if (!parse_index(p, label)) fail(path, line_no, "non-numeric label");
        if (label < 0 || label >= ds.meta.num_labels)
          fail(path, line_no, "label index out of range");
        ex.labels.push_back(label);
        if (*p == ',') {
          ++p;
          continue;
        }
        break;
      }
      if (*p != ' ' && *p != '\0' && *p != '\r')
        fail(path, line_no, "unexpected character after labels");
    }
    std::sort(ex.labels.begin(), ex.labels.end());
    ex.labels.erase(std::unique(ex.labels.begin(), ex.labels.end()),
                    ex.labels.end());

    // Feature field: space-separated index:value pairs.
    while (*p != '\0') {
      while (*p == ' ' || *p == '\r') ++p;
      if (*p == '\0') break;
      Index idx;
      double value;
      if (!parse_index(p, idx)) fail(path, line_no, "non-numeric feature index");
      if (*p != ':') fail(path, line_no, "expected ':' in feature pair");
      ++p;
      if (!parse_double(p, value)) fail(path, line_no, "non-numeric feature value");
      if (idx < 0 || idx >= ds.meta.num_features)
        fail(path, line_no, "feature index out of range");
      if (!std::isfinite(value)) fail(path, line_no, "non-finite feature value");
      ex.features.emplace_back(idx, value);
    }
    std::sort(ex.features.begin(), ex.features.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < ex.features.size(); ++i)
      if (ex.features[i].first == ex.features[i - 1].first)
        fail(path, line_no, "duplicate feature index");

    total_labels += static_cast<long long>(ex.labels.size());
    ds.examples.push_back(std::move(ex));
  }

  if (static_cast<Index>(ds.examples.size()) != ds.meta.num_points)
    fail(path, line_no,
         "record count " + std::to_string(ds.examples.size()) +
             " does not match header num_points " +
             std::to_string(ds.meta.num_points));
  ds.meta.avg_labels_per_point =
      ds.meta.num_points == 0
          ? 0.0
          : static_cast<double>(total_labels) / ds.meta.num_points;
  return ds;
}

void write_xc(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << dataset.meta.num_points << ' ' << dataset.meta.num_features << ' '
      << dataset.meta.num_labels << '\n';
  char buf[64];
  for (const auto& ex : dataset.examples) {
    for (std::size_t i = 0; i < ex.labels.size(); ++i) {
      if (i) out << ',';
      out << ex.labels[i];
    }
    for (const auto& [idx, value] : ex.features) {
      std::snprintf(buf, sizeof(buf), "%.17g", value);
      out << ' ' << idx << ':' << buf;
    }
    out << '\n';
  }
}

Dataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.num_points <= 0 || cfg.num_features <= 0 || cfg.num_labels <= 0 ||
      cfg.feats_per_point <= 0 || cfg.labels_per_point <= 0)
    throw std::invalid_argument("synth_dataset: parameters must be positive");
  if (cfg.labels_per_point > cfg.num_labels)
    throw std::invalid_argument("synth_dataset: labels_per_point > num_labels");
  if (cfg.feats_per_point > cfg.num_features)
    throw std::invalid_argument("synth_dataset: feats_per_point > num_features");
  if (!(cfg.signal_strength > 0.0))
    throw std::invalid_argument("synth_dataset: signal_strength must be positive");

  const double noise_amp = std::isinf(cfg.signal_strength)
                               ? 0.0
                               : 1.0 / cfg.signal_strength;

  if (cfg.label_clusters < 0 || cfg.label_clusters > cfg.num_labels)
    throw std::invalid_argument("synth_dataset: bad label_clusters");

  // Per-label feature signatures; clustered labels share a cluster base
  // for half of their features.
  auto sig_rng = make_engine(cfg.seed, 1);
  std::uniform_int_distribution<Index> feat_pick(0, cfg.num_features - 1);
  std::uniform_real_distribution<double> weight(0.5, 1.5);
  auto draw_distinct = [&](std::vector<std::pair<Index, double>>& sig, Index count) {
    std::vector<char> used(static_cast<std::size_t>(cfg.num_features), 0);
    for (const auto& [f, v] : sig) used[static_cast<std::size_t>(f)] = 1;
    while (count > 0) {
      Index f = feat_pick(sig_rng);
      if (used[static_cast<std::size_t>(f)]) continue;
      used[static_cast<std::size_t>(f)] = 1;
      sig.emplace_back(f, weight(sig_rng));
      --count;
    }
  };
  std::vector<std::vector<std::pair<Index, double>>> bases(
      static_cast<std::size_t>(std::max<Index>(cfg.label_clusters, 0)));
  for (auto& base : bases) draw_distinct(base, cfg.feats_per_point / 2);
  std::vector<std::vector<std::pair<Index, double>>> signatures(
      static_cast<std::size_t>(cfg.num_labels));
  for (Index l = 0; l < cfg.num_labels; ++l) {
    auto& sig = signatures[static_cast<std::size_t>(l)];
    if (cfg.label_clusters > 0)
      sig = bases[static_cast<std::size_t>(l % cfg.label_clusters)];
    draw_distinct(sig, cfg.feats_per_point - static_cast<Index>(sig.size()));
  }

  Dataset ds;
  ds.meta.num_points = cfg.num_points;
  ds.meta.num_features = cfg.num_features;
  ds.meta.num_labels = cfg.num_labels;
  ds.meta.avg_labels_per_point = static_cast<double>(cfg.labels_per_point);
  ds.examples.reserve(static_cast<std::size_t>(cfg.num_points));

  std::vector<Index> label_pool(static_cast<std::size_t>(cfg.num_labels));
  std::iota(label_pool.begin(), label_pool.end(), Index{0});
  for (Index p = 0; p < cfg.num_points; ++p) {
    auto rng = make_engine(cfg.seed, derive_seed(2, static_cast<std::uint64_t>(p)));
    SparseExample ex;
    // Distinct labels via partial Fisher-Yates over the pool.
    for (Index i = 0; i < cfg.labels_per_point; ++i) {
      std::uniform_int_distribution<Index> pick(i, cfg.num_labels - 1);
      std::swap(label_pool[static_cast<std::size_t>(i)],
                label_pool[static_cast<std::size_t>(pick(rng))]);
      ex.labels.push_back(label_pool[static_cast<std::size_t>(i)]);
    }
    std::sort(ex.labels.begin(), ex.labels.end());

    std::vector<std::pair<Index, double>> acc;  // sparse accumulator
    auto add = [&](Index f, double v) {
      for (auto& [fi, fv] : acc)
        if (fi == f) {
          fv += v;
          return;
        }
      acc.emplace_back(f, v);
    };
    for (Index label : ex.labels)
      for (const auto& [f, v] : signatures[static_cast<std::size_t>(label)])
        add(f, v);
    if (noise_amp > 0.0) {
      std::normal_distribution<double> noise(0.0, noise_amp);
      for (Index i = 0; i < cfg.feats_per_point; ++i)
        add(feat_pick(rng), std::abs(noise(rng)));
    }

    // Keep the strongest feats_per_point features, ties toward lower index.
    std::sort(acc.begin(), acc.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (static_cast<Index>(acc.size()) > cfg.feats_per_point)
      acc.resize(static_cast<std::size_t>(cfg.feats_per_point));
    std::sort(acc.begin(), acc.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    ex.features = std::move(acc);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& dataset,
                                             double test_fraction,
                                             std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("split_train_test: fraction must lie in [0, 1)");
  const std::size_t n = dataset.examples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_engine(seed, 3);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t test_count =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

  auto subset = [&](std::size_t from, std::size_t to) {
    Dataset part;
    part.meta = dataset.meta;
    part.meta.num_points = static_cast<Index>(to - from);
    long long labels = 0;
    for (std::size_t i = from; i < to; ++i) {
      part.examples.push_back(dataset.examples[order[i]]);
      labels += static_cast<long long>(part.examples.back().labels.size());
    }
    part.meta.avg_labels_per_point =
        part.examples.empty()
            ? 0.0
            : static_cast<double>(labels) / static_cast<double>(part.examples.size());
    return part;
  };
  return {subset(0, n - test_count), subset(n - test_count, n)};
}

}  // namespace pghash
