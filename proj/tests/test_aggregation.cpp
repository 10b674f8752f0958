#include <doctest.h>

#include <random>

#include "defl/aggregation.hpp"
#include "oracles/oracles.hpp"

using namespace defl;
using doctest::Approx;

namespace {

std::vector<WeightVector> column(std::initializer_list<double> xs) {
  std::vector<WeightVector> vs;
  for (double x : xs) vs.push_back(WeightVector::Constant(1, x));
  return vs;
}

std::vector<WeightVector> random_set(std::mt19937_64& rng, int m, int d) {
  std::normal_distribution<double> g;
  std::vector<WeightVector> vs;
  for (int i = 0; i < m; ++i) {
    WeightVector w(d);
    for (int c = 0; c < d; ++c) w[c] = g(rng);
    vs.push_back(w);
  }
  return vs;
}

}  // namespace

TEST_CASE("pairwise squared distances") {
  const auto d1 = pairwise_sq_dists(column({0.0, 3.0}));
  CHECK(d1(0, 1) == 9.0);
  CHECK(d1(1, 0) == 9.0);
  CHECK(d1(0, 0) == 0.0);

  std::vector<WeightVector> vs(3, WeightVector(2));
  vs[0] << 1, 0;
  vs[1] << 0, 1;
  vs[2] << 1, 1;
  const auto d = pairwise_sq_dists(vs);
  CHECK(d(0, 1) == 2.0);
  CHECK(d(0, 2) == 1.0);
  CHECK(d(1, 2) == 1.0);
  CHECK(d == d.transpose());

  CHECK(pairwise_sq_dists(std::vector<WeightVector>(4, WeightVector::Ones(3))).isZero());
  CHECK_THROWS_AS(pairwise_sq_dists(std::vector<WeightVector>{WeightVector::Zero(2), WeightVector::Zero(3)}),
                  DimensionError);
}

TEST_CASE("krum scores on the five-point example") {
  const auto vs = column({0.9, 1.0, 1.1, 1.05, 10.0});
  const auto scores = krum_scores(vs, 2);
  const auto expect = oracle::krum_scores({{0.9}, {1.0}, {1.1}, {1.05}, {10.0}}, 2);
  for (int i = 0; i < 5; ++i) CHECK(scores[i] == Approx(expect[i]).epsilon(1e-12));
  const auto best = std::min_element(scores.begin(), scores.end()) - scores.begin();
  CHECK(best == 3);

  const auto pick = krum_select(vs, {}, 2);
  CHECK(pick.owner == 3);
  CHECK(pick.weights[0] == 1.05);

  std::vector<WeightVector> doubled;
  for (const auto& v : vs) doubled.push_back(2.0 * v);
  const auto scaled = krum_scores(doubled, 2);
  for (int i = 0; i < 5; ++i) CHECK(scaled[i] == Approx(4.0 * scores[i]));

  CHECK_THROWS_AS(krum_scores(vs, 5), ParameterError);
  CHECK_THROWS_AS(krum_scores(vs, 0), ParameterError);
}

TEST_CASE("identical candidates score zero") {
  const std::vector<WeightVector> same(5, WeightVector::Constant(3, 2.5));
  for (double s : krum_scores(same, 3)) CHECK(s == 0.0);
}

TEST_CASE("krum ties go to the smaller owner id") {
  // Two symmetric clusters; every point has the same score.
  const auto vs = column({0.0, 0.0, 5.0, 5.0});
  CHECK(krum_select(vs, {9, 4, 2, 7}, 1).owner == 2);
  CHECK(krum_select(vs, {1, 4, 2, 7}, 1).owner == 1);
}

TEST_CASE("far outlier is never selected") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int m = 4 + trial % 4;
    const int nb = m - 3;
    auto vs = random_set(rng, m, 3);
    const auto bad = static_cast<std::size_t>(trial % m);
    vs[bad] = WeightVector::Constant(3, 1e6);
    CHECK(krum_select(vs, {}, nb).owner != bad);
  }
}

TEST_CASE("multi-krum on the five-point example") {
  const auto vs = column({0.9, 1.0, 1.1, 1.05, 10.0});
  AggregationParams p;
  p.k = 3;
  p.neighborhood = 2;
  CHECK(multi_krum(vs, {}, p)[0] == Approx((1.05 + 1.0 + 1.1) / 3.0).epsilon(1e-15));

  p.k = 1;
  CHECK(multi_krum(vs, {}, p) == krum_select(vs, {}, 2).weights);

  const std::vector<WeightVector> same(4, WeightVector::Constant(2, -1.5));
  AggregationParams all;
  all.k = 4;
  all.neighborhood = 2;
  CHECK(multi_krum(same, {}, all) == same[0]);

  p.k = 6;
  CHECK_THROWS_AS(multi_krum(vs, {}, p), InsufficientCandidatesError);
}

TEST_CASE("derived k and neighborhood follow the available count") {
  AggregationParams p;
  p.f_assumed = 1;
  CHECK(p.resolved_k(6) == 5);
  CHECK(p.resolved_neighborhood(6) == 3);
  CHECK(p.feasible(4));
  CHECK_FALSE(p.feasible(3));
}

TEST_CASE("multi-krum is permutation invariant and translation equivariant") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 5 + trial % 3;
    auto vs = random_set(rng, m, 3);
    std::vector<NodeId> owners(m);
    std::iota(owners.begin(), owners.end(), NodeId{0});
    AggregationParams p;
    p.f_assumed = 1;
    const WeightVector base = multi_krum(vs, owners, p);

    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<WeightVector> pv;
    std::vector<NodeId> po;
    for (auto i : perm) {
      pv.push_back(vs[i]);
      po.push_back(owners[i]);
    }
    CHECK((multi_krum(pv, po, p) - base).norm() == Approx(0.0).epsilon(1e-12));
    const auto s = krum_scores(vs, p.resolved_neighborhood(m));
    const auto ps = krum_scores(pv, p.resolved_neighborhood(m));
    for (int i = 0; i < m; ++i) CHECK(ps[i] == Approx(s[perm[i]]).epsilon(1e-12));

    const WeightVector c = WeightVector::Constant(3, 0.375);
    std::vector<WeightVector> shifted;
    for (const auto& v : vs) shifted.push_back(v + c);
    CHECK((multi_krum(shifted, owners, p) - (base + c)).norm() < 1e-9);
  }
}

TEST_CASE("multi-krum output stays near the honest candidates") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> wild(0.0, 1e3);
  for (int trial = 0; trial < 500; ++trial) {
    const int f = 1 + trial % 2;
    const int m = 2 * f + 3 + trial % 3;
    auto vs = random_set(rng, m, 2);
    for (int b = 0; b < f; ++b) {
      for (int c = 0; c < 2; ++c) vs[m - 1 - b][c] = wild(rng);
    }
    AggregationParams p;
    p.f_assumed = f;
    const WeightVector out = multi_krum(vs, {}, p);
    WeightVector lo = vs[0], hi = vs[0];
    double diameter = 0;
    for (int i = 0; i < m - f; ++i) {
      lo = lo.cwiseMin(vs[i]);
      hi = hi.cwiseMax(vs[i]);
      for (int j = 0; j < m - f; ++j) diameter = std::max(diameter, (vs[i] - vs[j]).norm());
    }
    for (int c = 0; c < 2; ++c) {
      CHECK(out[c] >= lo[c] - diameter);
      CHECK(out[c] <= hi[c] + diameter);
    }
  }
}

TEST_CASE("krum family agrees with a brute-force oracle") {
  std::mt19937_64 rng(29);
  std::uniform_int_distribution<int> small(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int m = 3 + trial % 5;
    const int d = 1 + trial % 3;
    std::vector<WeightVector> vs;
    std::vector<oracle::Vec> ov;
    for (int i = 0; i < m; ++i) {
      // Small integer grid so ties are common.
      WeightVector w(d);
      oracle::Vec o;
      for (int c = 0; c < d; ++c) {
        w[c] = small(rng) * 0.5;
        o.push_back(w[c]);
      }
      vs.push_back(w);
      ov.push_back(o);
    }
    std::vector<NodeId> owners(m);
    std::iota(owners.begin(), owners.end(), NodeId{0});
    std::shuffle(owners.begin(), owners.end(), rng);
    const int nb = 1 + trial % (m - 1);
    const int k = 1 + trial % m;
    AggregationParams p;
    p.k = k;
    p.neighborhood = nb;
    const auto want = oracle::select(ov, owners, nb, k);
    CHECK(multi_krum_selection(vs, owners, p) == want);
    CHECK(krum_select(vs, owners, nb).owner == owners[want.front()]);
    const auto mean = oracle::mean_of(ov, want);
    const WeightVector got = multi_krum(vs, owners, p);
    for (int c = 0; c < d; ++c) CHECK(std::abs(got[c] - mean[static_cast<std::size_t>(c)]) <= 1e-12);
  }
}

TEST_CASE("fed_avg") {
  std::vector<WeightVector> vs(2, WeightVector(2));
  vs[0] << 1, 3;
  vs[1] << 3, 5;
  CHECK(fed_avg(vs, {1, 1}) == (WeightVector(2) << 2, 4).finished());
  CHECK(fed_avg(vs, {1, 3}) == (WeightVector(2) << 2.5, 4.5).finished());
  CHECK(fed_avg(std::vector<WeightVector>{vs[1]}, {7}) == vs[1]);
  CHECK(fed_avg(vs) == (vs[0] + vs[1]) / 2.0);
  CHECK_THROWS_AS(fed_avg(vs, {0, 1}), ParameterError);
  CHECK_THROWS_AS(fed_avg(vs, {-1, 1}), ParameterError);
  CHECK_THROWS_AS(fed_avg(vs, {1}), ParameterError);
}

TEST_CASE("aggregate dispatches and the float instantiation works") {
  const auto vs = column({0.9, 1.0, 1.1, 1.05, 10.0});
  AggregationParams p;
  p.f_assumed = 1;
  CHECK(aggregate(AggregationRule::kKrum, vs, {}, p)[0] == 1.05);
  CHECK(aggregate(AggregationRule::kFedAvg, vs, {}, p)[0] == Approx(14.05 / 5));
  CHECK(parse_aggregation_rule(to_string(AggregationRule::kMultiKrum)) == AggregationRule::kMultiKrum);

  std::vector<VectorX<float>> fs;
  for (float x : {0.9f, 1.0f, 1.1f, 1.05f, 10.0f}) fs.push_back(VectorX<float>::Constant(1, x));
  CHECK(krum_select(fs, {}, 2).owner == 3);
}

TEST_CASE("eta") {
  CHECK(eta(6, 1) == Approx(std::sqrt(17.0)).epsilon(1e-15));
  CHECK(eta(6, 1) == Approx(4.1231).epsilon(1e-4));
  for (int n = 3; n <= 50; ++n) CHECK(eta(n, 0) == Approx(std::sqrt(2.0 * n)).epsilon(1e-15));
  for (int n = 3; n < 50; ++n) CHECK(eta(n + 1, 0) > eta(n, 0));
  for (int f = 0; f <= 10; ++f) {
    for (int n = 2 * f + 3; n < 50; ++n) CHECK(eta(n, f) == Approx(oracle::eta(n, f)).epsilon(1e-14));
  }
  // With f > 0 the curve first falls, then rises: one minimum in n.
  CHECK(eta(5, 1) > eta(6, 1));
  CHECK(eta(7, 1) > eta(6, 1));
  CHECK(eta(9, 2) > eta(10, 2));
  for (int f = 1; f <= 10; ++f) {
    bool rising = false;
    for (int n = 2 * f + 3; n < 200; ++n) {
      if (eta(n + 1, f) > eta(n, f)) rising = true;
      if (rising) CHECK(eta(n + 1, f) > eta(n, f));
    }
    CHECK(rising);
  }
  CHECK_THROWS_AS(eta(4, 1), ParameterError);
}

TEST_CASE("bft margin") {
  CHECK(bft_margin_ok(6, 1, 4, 0.0, 1e-9));
  CHECK_FALSE(bft_margin_ok(6, 1, 4, 0.1, 0.0));
  CHECK(bft_margin_ok(6, 1, 4, 0.1, 1.0));
  CHECK_FALSE(bft_margin_ok(6, 1, 4, 0.1, 0.82));
}
