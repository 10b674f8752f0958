#include <doctest.h>

#include <random>

#include "defl/storage_pool.hpp"

using namespace defl;

namespace {

WeightVector vec(int d, double x) { return WeightVector::Constant(d, x); }

}  // namespace

TEST_CASE("put and get") {
  StoragePool pool;
  const WeightVector w = (WeightVector(3) << 1.0, -2.0, 0.5).finished();
  const Digest dg = pool.put(w, 1);
  CHECK(dg == digest(w));
  CHECK(pool.get(dg) == w);
  CHECK(pool.contains(dg));
  CHECK(pool.find(digest(vec(3, 9.0))) == nullptr);
  CHECK_THROWS_AS(pool.get(digest(vec(3, 9.0))), NotFound);
}

TEST_CASE("put is idempotent") {
  StoragePool pool;
  const Digest a = pool.put(vec(4, 1.0), 1);
  const Digest b = pool.put(vec(4, 1.0), 3);
  CHECK(a == b);
  CHECK(pool.stats().entries == 1);
  CHECK(pool.stats().current_bytes == 8 * 4 + StoragePool::kEntryMetadataBytes);
  // The first round tag sticks, so round-1 eviction removes it.
  pool.gc_rounds(3, 2);
  CHECK_FALSE(pool.contains(a));
}

TEST_CASE("bytes for n*tau distinct vectors") {
  const int n = 6, tau = 2, d = 20;
  StoragePool pool;
  for (int r = 1; r <= tau; ++r) {
    for (int i = 0; i < n; ++i) pool.put(vec(d, r * 100.0 + i), static_cast<RoundId>(r));
  }
  CHECK(pool.stats().current_bytes == static_cast<std::uint64_t>(n * tau * (8 * d + 48)));
  CHECK(pool.stats().peak_bytes == pool.stats().current_bytes);
}

TEST_CASE("gc evicts rounds at or below current - tau") {
  StoragePool pool;
  std::vector<Digest> by_round;
  for (RoundId r = 0; r <= 5; ++r) by_round.push_back(pool.put(vec(2, static_cast<double>(r)), r));
  CHECK(pool.gc_rounds(1, 2) == 0);
  CHECK(pool.stats().entries == 6);
  const auto peak = pool.stats().peak_bytes;
  CHECK(pool.gc_rounds(5, 2) == 4);
  for (RoundId r = 0; r <= 3; ++r) CHECK_THROWS_AS(pool.get(by_round[r]), NotFound);
  CHECK(pool.contains(by_round[4]));
  CHECK(pool.contains(by_round[5]));
  CHECK(pool.stats().peak_bytes == peak);
  CHECK(pool.stats().current_bytes == 2 * (16 + 48));
  CHECK_THROWS_AS(pool.gc_rounds(5, 1), ParameterError);
}

TEST_CASE("peak does not grow with the number of rounds") {
  auto run = [](int rounds) {
    StoragePool pool;
    for (int r = 1; r <= rounds; ++r) {
      for (int i = 0; i < 4; ++i) pool.put(vec(10, r * 10.0 + i), static_cast<RoundId>(r));
      pool.gc_rounds(static_cast<RoundId>(r + 1), 2);
    }
    return pool.stats().peak_bytes;
  };
  CHECK(run(20) == run(200));
  CHECK(run(20) <= 2u * 4u * (80u + 48u));
}

TEST_CASE("verified puts reject mismatched content") {
  StoragePool pool;
  const WeightVector w = vec(3, 2.0);
  CHECK_FALSE(pool.put_verified(digest(vec(3, 1.0)), w, 1));
  CHECK(pool.stats().entries == 0);
  CHECK(pool.put_verified(digest(w), w, 1));
  CHECK(pool.get(digest(w)) == w);
}

TEST_CASE("content addressing over random vectors") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  StoragePool pool;
  for (int i = 0; i < 300; ++i) {
    WeightVector w(1 + i % 9);
    for (Eigen::Index c = 0; c < w.size(); ++c) w[c] = g(rng);
    CHECK(pool.get(pool.put(w, 0)) == w);
  }
}

TEST_CASE("reference counts do not affect eviction") {
  StoragePool pool;
  const Digest dg = pool.put(vec(1, 1.0), 1);
  pool.retain(dg);
  pool.retain(dg);
  pool.release(dg);
  pool.gc_rounds(3, 2);
  CHECK_FALSE(pool.contains(dg));
}
