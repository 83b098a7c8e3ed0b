#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pghash/data.hpp"
#include "pghash/rng.hpp"

using namespace pghash;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("parses labels and features") {
  TempFile f("pghash_parse.txt");
  write_file(f.path, "2 5 3\n0,2 1:0.5 4:1.0\n 0:1.0\n");
  Dataset ds = parse_xc(f.path);
  REQUIRE(ds.examples.size() == 2);
  CHECK(ds.meta.num_points == 2);
  CHECK(ds.meta.num_features == 5);
  CHECK(ds.meta.num_labels == 3);
  CHECK(ds.examples[0].labels == std::vector<Index>{0, 2});
  REQUIRE(ds.examples[0].features.size() == 2);
  CHECK(ds.examples[0].features[0] == std::pair<Index, double>{1, 0.5});
  CHECK(ds.examples[0].features[1] == std::pair<Index, double>{4, 1.0});
  CHECK(ds.examples[1].labels.empty());
  CHECK(ds.meta.avg_labels_per_point == doctest::Approx(1.0));
}

TEST_CASE("errors carry line numbers") {
  TempFile f("pghash_bad.txt");

  SUBCASE("missing header") {
    write_file(f.path, "");
    CHECK_THROWS_WITH_AS(parse_xc(f.path),
                         doctest::Contains(":1: missing header"),
                         std::runtime_error);
  }
  SUBCASE("feature index out of range") {
    write_file(f.path, "1 5 3\n0 7:1.0\n");
    CHECK_THROWS_WITH_AS(parse_xc(f.path), doctest::Contains(":2:"),
                         std::runtime_error);
  }
  SUBCASE("non-numeric token") {
    write_file(f.path, "1 5 3\n0 x:1.0\n");
    CHECK_THROWS_AS(parse_xc(f.path), std::runtime_error);
  }
  SUBCASE("record count mismatch") {
    write_file(f.path, "3 5 3\n0 1:1.0\n");
    CHECK_THROWS_AS(parse_xc(f.path), std::runtime_error);
  }
  SUBCASE("duplicate feature index") {
    write_file(f.path, "1 5 3\n0 1:1.0 1:2.0\n");
    CHECK_THROWS_WITH_AS(parse_xc(f.path), doctest::Contains("duplicate"),
                         std::runtime_error);
  }
  SUBCASE("label out of range") {
    write_file(f.path, "1 5 3\n5 1:1.0\n");
    CHECK_THROWS_AS(parse_xc(f.path), std::runtime_error);
  }
}

TEST_CASE("write-then-parse round trip is exact") {
  SynthConfig cfg;
  cfg.num_points = 40;
  cfg.num_features = 30;
  cfg.num_labels = 10;
  cfg.feats_per_point = 5;
  cfg.labels_per_point = 2;
  cfg.seed = 11;
  Dataset ds = synth_dataset(cfg);
  TempFile f("pghash_roundtrip.txt");
  write_xc(f.path, ds);
  Dataset back = parse_xc(f.path);
  REQUIRE(back.examples.size() == ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    CHECK(back.examples[i].labels == ds.examples[i].labels);
    CHECK(back.examples[i].features == ds.examples[i].features);
  }
}

TEST_CASE("gzip-compressed files parse identically") {
  SynthConfig cfg;
  cfg.num_points = 15;
  cfg.seed = 3;
  Dataset ds = synth_dataset(cfg);
  TempFile plain("pghash_gz_src.txt");
  TempFile gz("pghash_data.txt.gz");
  write_xc(plain.path, ds);
  REQUIRE(std::system(("gzip -c " + plain.path + " > " + gz.path).c_str()) == 0);
  Dataset back = parse_xc(gz.path);
  REQUIRE(back.examples.size() == ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i)
    CHECK(back.examples[i].features == ds.examples[i].features);
}

TEST_CASE("synthetic data is seed-deterministic") {
  SynthConfig cfg;
  cfg.num_points = 25;
  cfg.seed = 99;
  Dataset a = synth_dataset(cfg);
  Dataset b = synth_dataset(cfg);
  REQUIRE(a.examples.size() == b.examples.size());
  for (std::size_t i = 0; i < a.examples.size(); ++i) {
    CHECK(a.examples[i].labels == b.examples[i].labels);
    CHECK(a.examples[i].features == b.examples[i].features);
  }
  cfg.seed = 100;
  Dataset c = synth_dataset(cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.examples.size(); ++i)
    if (a.examples[i].features != c.examples[i].features) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("synthetic metadata matches configuration") {
  SynthConfig cfg;
  cfg.num_points = 50;
  cfg.labels_per_point = 3;
  cfg.feats_per_point = 8;
  Dataset ds = synth_dataset(cfg);
  CHECK(ds.meta.avg_labels_per_point == doctest::Approx(3.0));
  for (const auto& ex : ds.examples) {
    CHECK(ex.labels.size() == 3);
    CHECK(ex.features.size() <= 8);
  }
}

TEST_CASE("split is disjoint, covering, and sized by fraction") {
  SynthConfig cfg;
  cfg.num_points = 100;
  cfg.seed = 5;
  Dataset ds = synth_dataset(cfg);
  auto [train, test] = split_train_test(ds, 0.1, 7);
  CHECK(train.examples.size() == 90);
  CHECK(test.examples.size() == 10);
  CHECK(train.meta.num_points == 90);
}

TEST_CASE("synth parameter validation") {
  SynthConfig cfg;
  cfg.labels_per_point = 100;
  cfg.num_labels = 10;
  CHECK_THROWS_AS(synth_dataset(cfg), std::invalid_argument);
}

}  // TEST_SUITE
