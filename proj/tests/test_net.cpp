#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "pghash/net.hpp"
#include "pghash/rng.hpp"

using namespace pghash;

namespace {

SparseExample make_example(std::vector<std::pair<Index, double>> feats,
                           std::vector<Index> labels) {
  SparseExample ex;
  ex.features = std::move(feats);
  ex.labels = std::move(labels);
  return ex;
}

std::vector<SparseExample> random_batch(Index d_in, Index n, int batch,
                                        std::uint64_t seed) {
  auto rng = make_engine(seed);
  std::uniform_int_distribution<Index> feat(0, d_in - 1);
  std::uniform_int_distribution<Index> label(0, n - 1);
  std::uniform_real_distribution<double> value(-1.0, 1.0);
  std::vector<SparseExample> out;
  for (int m = 0; m < batch; ++m) {
    SparseExample ex;
    std::vector<Index> idx;
    while (idx.size() < 3) {
      Index f = feat(rng);
      if (std::find(idx.begin(), idx.end(), f) == idx.end()) idx.push_back(f);
    }
    std::sort(idx.begin(), idx.end());
    for (Index f : idx) ex.features.emplace_back(f, value(rng));
    ex.labels = {label(rng)};
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Index> all_neurons(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

// Loss recomputed from scratch; drives the finite-difference checks.
double batch_loss(const Network& net, std::span<const SparseExample> batch,
                  const std::vector<std::vector<Index>>& active_sets) {
  Matrix hidden = net.hidden_batch(batch);
  return loss_and_grad(net, batch, hidden, active_sets).loss;
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("empty example produces ReLU of the bias") {
  Network net(4, 3, 5, 1);
  net.b1() << 0.5, -0.2, 0.0;
  Vector h = net.hidden(make_example({}, {0}));
  CHECK(h[0] == doctest::Approx(0.5));
  CHECK(h[1] == 0.0);
  CHECK(h[2] == 0.0);
}

TEST_CASE("one-hot feature selects a row of W1") {
  Network net(4, 3, 5, 2);
  net.b1().setZero();
  Vector h = net.hidden(make_example({{2, 1.0}}, {0}));
  Vector expected = net.w1().row(2).transpose().cwiseMax(0.0);
  CHECK((h - expected).norm() < 1e-15);
}

TEST_CASE("sparse hidden path equals a dense product") {
  Network net(12, 6, 4, 3);
  auto batch = random_batch(12, 4, 8, 17);
  for (const auto& ex : batch) {
    Vector dense = Vector::Zero(12);
    for (auto& [i, v] : ex.features) dense[i] = v;
    Vector expected = (net.w1().transpose() * dense + net.b1()).cwiseMax(0.0);
    CHECK((net.hidden(ex) - expected).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("out-of-range feature index is rejected") {
  Network net(4, 3, 5, 4);
  CHECK_THROWS_AS(net.hidden(make_example({{9, 1.0}}, {})), std::out_of_range);
}

TEST_CASE("active logits over the full set equal the dense forward") {
  Network net(10, 5, 7, 5);
  auto batch = random_batch(10, 7, 3, 23);
  Matrix hidden = net.hidden_batch(batch);
  Matrix dense = net.full_logits(hidden);
  auto active = all_neurons(7);
  for (Index m = 0; m < 3; ++m) {
    Vector sparse = net.active_logits(hidden.col(m), active);
    CHECK((sparse - dense.col(m)).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("singleton active set is a single dot product") {
  Network net(6, 4, 9, 6);
  Vector h = Vector::Ones(4);
  Vector out = net.active_logits(h, {3});
  CHECK(out.size() == 1);
  CHECK(out[0] == doctest::Approx(net.w2().col(3).sum() + net.b2()[3]));
  CHECK_THROWS_AS(net.active_logits(h, {9}), std::out_of_range);
}

TEST_CASE("target-layer flop counter scales linearly in the active count") {
  Network net(6, 32, 64, 7);
  Vector h = Vector::Ones(32);
  net.reset_target_flops();
  net.active_logits(h, all_neurons(16));
  const auto f16 = net.target_flops();
  net.reset_target_flops();
  net.active_logits(h, all_neurons(32));
  const auto f32 = net.target_flops();
  CHECK(f32 == 2 * f16);
}

TEST_CASE("softmax over a singleton true label gives zero loss") {
  Network net(5, 4, 6, 8);
  auto ex = make_example({{1, 1.0}}, {2});
  Matrix hidden = net.hidden_batch(std::span(&ex, 1));
  auto grads = loss_and_grad(net, std::span(&ex, 1), hidden, {{2}});
  CHECK(grads.loss == doctest::Approx(0.0));
  CHECK(grads.counted_samples == 1);
}

TEST_CASE("batch loss is the mean of per-sample losses") {
  Network net(8, 4, 5, 9);
  auto batch = random_batch(8, 5, 2, 31);
  Matrix hidden = net.hidden_batch(batch);
  auto active = all_neurons(5);
  std::vector<std::vector<Index>> both{active, active};
  double joint = loss_and_grad(net, batch, hidden, both).loss;
  double first = loss_and_grad(net, std::span(batch.data(), 1),
                               hidden.leftCols(1), {active}).loss;
  double second = loss_and_grad(net, std::span(batch.data() + 1, 1),
                                hidden.rightCols(1), {active}).loss;
  CHECK(joint == doctest::Approx((first + second) / 2.0));
}

TEST_CASE("unlabeled samples are skipped") {
  Network net(5, 3, 4, 10);
  std::vector<SparseExample> batch{make_example({{0, 1.0}}, {}),
                                   make_example({{1, 1.0}}, {2})};
  Matrix hidden = net.hidden_batch(batch);
  auto grads = loss_and_grad(net, batch, hidden,
                             {all_neurons(4), all_neurons(4)});
  CHECK(grads.counted_samples == 1);
}

TEST_CASE("analytical gradients match central finite differences") {
  // 5 x 4 x 6 toy network, mixed full and partial active sets.
  const Index d_in = 5, h = 4, n = 6;
  for (int rep = 0; rep < 10; ++rep) {
    Network net(d_in, h, n, derive_seed(40, rep));
    auto batch = random_batch(d_in, n, 3, derive_seed(41, rep));
    std::vector<std::vector<Index>> sets;
    for (int m = 0; m < 3; ++m) {
      std::vector<Index> s = {batch[m].labels[0]};
      for (Index j = 0; j < n; j += 2) s.push_back(j);
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
      sets.push_back(std::move(s));
    }
    Matrix hidden = net.hidden_batch(batch);
    auto grads = loss_and_grad(net, batch, hidden, sets);

    const double eps = 1e-6;
    double max_rel = 0.0;
    auto probe = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + eps;
      const double up = batch_loss(net, batch, sets);
      param = saved - eps;
      const double down = batch_loss(net, batch, sets);
      param = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double rel =
          std::abs(analytic - fd) / std::max({1e-6, std::abs(analytic), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    };

    for (Index i = 0; i < d_in; ++i)
      for (Index j = 0; j < h; ++j) probe(net.w1()(i, j), grads.dw1(i, j));
    for (Index j = 0; j < h; ++j) probe(net.b1()[j], grads.db1[j]);
    for (std::size_t s = 0; s < grads.active.size(); ++s) {
      const Index col = grads.active[s];
      for (Index i = 0; i < h; ++i)
        probe(net.w2()(i, col), grads.dw2_active(i, static_cast<Index>(s)));
      probe(net.b2()[col], grads.db2_active[static_cast<Index>(s)]);
    }
    CHECK(max_rel < 1e-5);
  }
}

TEST_CASE("adam: zero gradient leaves fresh parameters unchanged") {
  Network net(4, 3, 5, 11);
  Adam opt(net, AdamConfig{});
  Matrix w1_before = net.w1();
  BatchGrads grads;
  grads.dw1 = Matrix::Zero(4, 3);
  grads.db1 = Vector::Zero(3);
  grads.dw2_active = Matrix::Zero(3, 0);
  grads.db2_active = Vector::Zero(0);
  opt.apply(net, grads);
  CHECK(opt.step() == 1);
  CHECK((net.w1() - w1_before).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("adam: first bias-corrected step has magnitude ~ lr") {
  Eigen::ArrayXd p(1), g(1), m(1), v(1);
  p << 10.0;
  g << 1.0;
  m.setZero();
  v.setZero();
  AdamConfig cfg;
  cfg.lr = 0.5;
  adam_update(p, g, m, v, 1, cfg);
  CHECK(p[0] == doctest::Approx(10.0 - cfg.lr).epsilon(1e-6));
}

TEST_CASE("adam: non-finite gradients are rejected") {
  Network net(4, 3, 5, 12);
  Adam opt(net, AdamConfig{});
  BatchGrads grads;
  grads.dw1 = Matrix::Zero(4, 3);
  grads.dw1(0, 0) = std::numeric_limits<double>::quiet_NaN();
  grads.db1 = Vector::Zero(3);
  grads.dw2_active = Matrix::Zero(3, 0);
  grads.db2_active = Vector::Zero(0);
  CHECK_THROWS_AS(opt.apply(net, grads), std::invalid_argument);
}

TEST_CASE("sparse adam equals the dense update restricted to active columns") {
  const Index n = 8;
  Network sparse_net(6, 4, n, 13);
  Network dense_net = sparse_net;
  Adam sparse_opt(sparse_net, AdamConfig{.lr = 1e-2});
  Adam dense_opt(dense_net, AdamConfig{.lr = 1e-2});

  auto batch = random_batch(6, n, 4, 47);
  Matrix hidden = sparse_net.hidden_batch(batch);
  std::vector<Index> active{1, 4, 6};
  for (auto& ex : batch) ex.labels = {active[static_cast<std::size_t>(ex.labels[0] % 3)]};
  std::vector<std::vector<Index>> sets(4, active);

  auto grads = loss_and_grad(sparse_net, batch, hidden, sets);
  sparse_opt.apply(sparse_net, grads);

  // Dense route: same gradients scattered into a full-width update.
  BatchGrads dense;
  dense.dw1 = grads.dw1;
  dense.db1 = grads.db1;
  dense.active = all_neurons(n);
  dense.dw2_active = Matrix::Zero(4, n);
  dense.db2_active = Vector::Zero(n);
  for (std::size_t i = 0; i < grads.active.size(); ++i) {
    dense.dw2_active.col(grads.active[i]) = grads.dw2_active.col(static_cast<Index>(i));
    dense.db2_active[grads.active[i]] = grads.db2_active[static_cast<Index>(i)];
  }
  dense_opt.apply(dense_net, dense);

  CHECK((sparse_net.w2() - dense_net.w2()).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK((sparse_net.b2() - dense_net.b2()).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK((sparse_net.w1() - dense_net.w1()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("precision at 1") {
  Matrix logits(4, 3);
  logits << 0.1, 5.0, 2.0,
            0.9, 1.0, 2.0,
            0.2, 0.5, 2.0,
            0.1, 0.0, 1.0;
  std::vector<SparseExample> batch{
      make_example({}, {1}),        // argmax row 1? col0: max at row 1 (0.9)
      make_example({}, {0, 2, 3}),  // col1: argmax row 0, in labels
      make_example({}, {}),         // unlabeled: excluded
  };
  auto p = precision_at_1(logits, batch);
  CHECK(p.counted == 2);
  CHECK(p.value == doctest::Approx(1.0));

  // Ties resolve toward the lowest index.
  Matrix tied = Matrix::Ones(3, 1);
  std::vector<SparseExample> one{make_example({}, {0})};
  CHECK(precision_at_1(tied, one).value == doctest::Approx(1.0));
  std::vector<SparseExample> miss{make_example({}, {2})};
  CHECK(precision_at_1(tied, miss).value == doctest::Approx(0.0));
}

TEST_CASE("loss decreases over 100 full-set steps on a separable toy") {
  const Index d_in = 10, h = 8, n = 4;
  Network net(d_in, h, n, 15);
  Adam opt(net, AdamConfig{.lr = 1e-2});
  std::vector<SparseExample> batch;
  for (Index j = 0; j < n; ++j)
    batch.push_back(make_example({{j, 1.0}, {n + j, 0.5}}, {j}));
  auto active = all_neurons(n);
  std::vector<std::vector<Index>> sets(batch.size(), active);

  double first_loss = 0.0, last_loss = 0.0;
  for (int step = 0; step < 100; ++step) {
    Matrix hidden = net.hidden_batch(batch);
    auto grads = loss_and_grad(net, batch, hidden, sets);
    if (step == 0) first_loss = grads.loss;
    last_loss = grads.loss;
    opt.apply(net, grads);
  }
  CHECK(last_loss < first_loss);
  CHECK(last_loss < 0.1);
}

TEST_CASE("checkpoint round trip preserves weights and optimizer state") {
  Network net(6, 4, 5, 16);
  Adam opt(net, AdamConfig{.lr = 1e-3});
  auto batch = random_batch(6, 5, 3, 53);
  std::vector<std::vector<Index>> sets(3, all_neurons(5));
  for (int step = 0; step < 5; ++step) {
    Matrix hidden = net.hidden_batch(batch);
    opt.apply(net, loss_and_grad(net, batch, hidden, sets));
  }
  auto path = (std::filesystem::temp_directory_path() / "pghash_ckpt.bin").string();
  save_checkpoint(path, net, opt);

  Network restored(6, 4, 5, 999);
  Adam restored_opt(restored, AdamConfig{.lr = 1e-3});
  load_checkpoint(path, restored, restored_opt);
  CHECK((restored.w1() - net.w1()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((restored.w2() - net.w2()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(restored_opt.step() == opt.step());

  // Same continuation from both copies.
  Matrix hidden = net.hidden_batch(batch);
  auto g1 = loss_and_grad(net, batch, hidden, sets);
  auto g2 = loss_and_grad(restored, batch, hidden, sets);
  opt.apply(net, g1);
  restored_opt.apply(restored, g2);
  CHECK((restored.w2() - net.w2()).lpNorm<Eigen::Infinity>() == 0.0);
  std::remove(path.c_str());
}

}  // TEST_SUITE
