#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "alam/autograd.hpp"
#include "alam/quantizer.hpp"
#include "test_util.hpp"

using namespace alam;

namespace {

Codebook book_from(std::vector<std::vector<double>> entries, double decay = 0.99) {
  Codebook b;
  const int M = static_cast<int>(entries.size());
  const int D = static_cast<int>(entries[0].size());
  b.entries = Tensor({M, D});
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < D; ++j) b.entries.at(i, j) = entries[static_cast<size_t>(i)][static_cast<size_t>(j)];
  b.ema_sums = b.entries;
  b.ema_counts.assign(static_cast<size_t>(M), 1.0);
  b.decay = decay;
  return b;
}

Tensor vec(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor::from({1, n}, std::move(v));
}

// Independent oracle: materialize all distances, then pick the first
// minimum with std::min_element (stable for ties).
int scan_nearest(const Tensor& z, const Codebook& b) {
  std::vector<double> d(static_cast<size_t>(b.size()));
  for (int i = 0; i < b.size(); ++i) {
    double s = 0.0;
    for (int j = 0; j < b.dim(); ++j) {
      const double diff = z.data[static_cast<size_t>(j)] - b.entries.at(i, j);
      s += diff * diff;
    }
    d[static_cast<size_t>(i)] = s;
  }
  return static_cast<int>(std::min_element(d.begin(), d.end()) - d.begin());
}

}  // namespace

TEST_CASE("quantize picks the nearest entry with lowest-index ties") {
  Codebook b = book_from({{0, 0}, {1, 1}});

  const QuantizeResult r1 = quantize(vec({0.9, 0.8}), b);
  CHECK(r1.code_index == 1);
  CHECK(r1.z_q.data[0] == 1.0);
  CHECK(r1.z_q.data[1] == 1.0);
  CHECK(r1.commit_loss == doctest::Approx(0.05).epsilon(1e-12));

  const QuantizeResult r2 = quantize(vec({0.5, 0.5}), b);
  CHECK(r2.code_index == 0);  // equidistant -> lowest index

  const QuantizeResult r3 = quantize(vec({1.0, 1.0}), b);
  CHECK(r3.commit_loss == 0.0);
  CHECK(r3.code_index == 1);

  Codebook empty;
  empty.entries = Tensor({0, 2});
  CHECK_THROWS_AS(quantize(vec({0, 0}), empty), ValidationError);
}

TEST_CASE("quantize equals an exhaustive scan on random queries") {
  Rng rng(31);
  for (int M : {1, 7, 64}) {
    Codebook b;
    b.entries = testutil::random_tensor({M, 8}, rng);
    b.ema_sums = b.entries;
    b.ema_counts.assign(static_cast<size_t>(M), 1.0);
    for (int q = 0; q < 500; ++q) {
      const Tensor z = testutil::random_tensor({1, 8}, rng);
      CHECK(quantize(z, b).code_index == scan_nearest(z, b));
    }
  }
}

TEST_CASE("ema_update matches the hand-evaluated recurrence") {
  Codebook b = book_from({{1, 1}}, 0.99);
  ema_update(b, {vec({3, 3})}, {0});
  CHECK(b.ema_counts[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b.ema_sums.at(0, 0) == doctest::Approx(1.02).epsilon(1e-15));
  CHECK(b.ema_sums.at(0, 1) == doctest::Approx(1.02).epsilon(1e-15));
  CHECK(b.entries.at(0, 0) == doctest::Approx(1.02).epsilon(1e-15));

  // empty batch decays counts and sums; the entry ratio is unchanged
  Codebook c = book_from({{2, 4}}, 0.9);
  c.ema_counts[0] = 0.5;
  c.ema_sums.at(0, 0) = 1.0;
  c.ema_sums.at(0, 1) = 2.0;
  ema_update(c, {}, {});
  CHECK(c.ema_counts[0] == doctest::Approx(0.45).epsilon(1e-15));
  CHECK(c.ema_sums.at(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(c.entries.at(0, 0) == doctest::Approx(0.9 / 0.45).epsilon(1e-12));
}

TEST_CASE("100 sequential ema updates match a scalar-loop oracle") {
  const int M = 5, D = 3;
  Rng rng(32);
  Codebook b;
  b.entries = testutil::random_tensor({M, D}, rng);
  b.ema_sums = b.entries;
  b.ema_counts.assign(static_cast<size_t>(M), 1.0);
  b.decay = 0.99;
  b.eps_count = 1e-5;

  // oracle state: plain per-code scalars
  std::vector<std::vector<double>> om(static_cast<size_t>(M), std::vector<double>(static_cast<size_t>(D)));
  std::vector<double> on(static_cast<size_t>(M), 1.0);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < D; ++j) om[static_cast<size_t>(i)][static_cast<size_t>(j)] = b.entries.at(i, j);

  Rng data_rng(33);
  for (int step = 0; step < 100; ++step) {
    std::vector<Tensor> zs;
    std::vector<int> idx;
    const int n = 1 + static_cast<int>(data_rng.uniform_int(6));
    for (int k = 0; k < n; ++k) {
      zs.push_back(testutil::random_tensor({1, D}, data_rng));
      idx.push_back(static_cast<int>(data_rng.uniform_int(M)));
    }
    ema_update(b, zs, idx);
    for (int i = 0; i < M; ++i) {
      double cnt = 0.0;
      std::vector<double> s(static_cast<size_t>(D), 0.0);
      for (int k = 0; k < n; ++k)
        if (idx[static_cast<size_t>(k)] == i) {
          cnt += 1.0;
          for (int j = 0; j < D; ++j) s[static_cast<size_t>(j)] += zs[static_cast<size_t>(k)].data[static_cast<size_t>(j)];
        }
      on[static_cast<size_t>(i)] = 0.99 * on[static_cast<size_t>(i)] + 0.01 * cnt;
      for (int j = 0; j < D; ++j)
        om[static_cast<size_t>(i)][static_cast<size_t>(j)] = 0.99 * om[static_cast<size_t>(i)][static_cast<size_t>(j)] + 0.01 * s[static_cast<size_t>(j)];
    }
  }
  for (int i = 0; i < M; ++i) {
    CHECK(std::fabs(b.ema_counts[static_cast<size_t>(i)] - on[static_cast<size_t>(i)]) < 1e-10);
    for (int j = 0; j < D; ++j) {
      CHECK(std::fabs(b.ema_sums.at(i, j) - om[static_cast<size_t>(i)][static_cast<size_t>(j)]) < 1e-10);
      const double want = om[static_cast<size_t>(i)][static_cast<size_t>(j)] / std::max(on[static_cast<size_t>(i)], 1e-5);
      CHECK(std::fabs(b.entries.at(i, j) - want) < 1e-10);
    }
  }
}

TEST_CASE("codebook stays finite under many updates at several decays") {
  for (double decay : {0.9, 0.99, 0.999}) {
    Rng rng(static_cast<uint64_t>(decay * 1000));
    QuantizerConfig qc;
    qc.ema_decay = decay;
    Codebook b = Codebook::init(7, 4, rng, qc);
    for (int step = 0; step < 100000; ++step) {
      std::vector<Tensor> zs{testutil::random_tensor({1, 4}, rng, 2.0)};
      std::vector<int> idx{static_cast<int>(rng.uniform_int(7))};
      ema_update(b, zs, idx);
    }
    CHECK(b.entries.all_finite());
    CHECK(b.ema_sums.all_finite());
    for (double n : b.ema_counts) CHECK(std::isfinite(n));
  }
}

TEST_CASE("commitment gradient flows to z only, never to the codebook") {
  Codebook b = book_from({{0.5, -0.25}, {1, 2}});
  const Tensor before = b.entries;
  Rng rng(34);
  const Tensor zv = testutil::random_tensor({1, 2}, rng);

  ag::Tape t;
  const int z = t.leaf(zv, true);
  const QuantizeResult qr = quantize(zv, b);
  const int commit = ag::sum_squares(t, t.sub(z, t.constant(qr.z_q)));
  t.backward(commit);
  // d/dz ||z - sg(z_q)||^2 = 2 (z - z_q), exactly
  for (int j = 0; j < 2; ++j)
    CHECK(t.grad(z).data[static_cast<size_t>(j)] ==
          doctest::Approx(2.0 * (zv.data[static_cast<size_t>(j)] - qr.z_q.data[static_cast<size_t>(j)])).epsilon(1e-15));
  // the codebook never enters the tape; its storage is untouched
  CHECK(b.entries.data == before.data);
}

TEST_CASE("dead code restart reseeds starved entries only") {
  Codebook b = book_from({{0, 0}, {5, 5}});
  b.ema_counts = {1.0, 1e-6};
  Rng rng(35);
  const std::vector<Tensor> batch{vec({2, 2}), vec({3, 3})};
  restart_dead_codes(b, batch, 1e-2, rng);
  CHECK(b.entries.at(0, 0) == 0.0);  // live code untouched
  const bool reseeded = (b.entries.at(1, 0) == 2.0) || (b.entries.at(1, 0) == 3.0);
  CHECK(reseeded);
  CHECK(b.ema_counts[1] == 1.0);
}
