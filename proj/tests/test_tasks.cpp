#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "defl/tasks.hpp"

using namespace defl;
using doctest::Approx;

namespace {

Task quadratic_task(int d) {
  Task t;
  t.kind = TaskKind::kQuadratic;
  t.d = d;
  t.optimum = WeightVector::Zero(d);
  return t;
}

DataShard shard_of(Dataset data) {
  DataShard s;
  s.data = std::move(data);
  for (Eigen::Index i = 0; i < s.data.size(); ++i) s.source_rows.push_back(static_cast<std::size_t>(i));
  return s;
}

// Central differences of Task::loss.
WeightVector numeric_gradient(const Task& task, const WeightVector& w, const Dataset& data) {
  WeightVector g(w.size());
  for (Eigen::Index c = 0; c < w.size(); ++c) {
    const double h = 1e-6 * std::max(1.0, std::abs(w[c]));
    WeightVector up = w, down = w;
    up[c] += h;
    down[c] -= h;
    g[c] = (task.loss(up, data) - task.loss(down, data)) / (2 * h);
  }
  return g;
}

// Exact E|G_b - grad|^2 / d by enumerating every size-b subset.
double enumerated_sigma_sq(const Task& task, const WeightVector& w, const Dataset& data, int b) {
  const auto n = static_cast<int>(data.size());
  const WeightVector full = task.gradient(w, data);
  double total = 0;
  int count = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != b) continue;
    std::vector<std::size_t> rows;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) rows.push_back(static_cast<std::size_t>(i));
    }
    total += (task.gradient(w, data.subset(rows)) - full).squaredNorm();
    ++count;
  }
  return total / count / task.d;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  LrSchedule s{2.0};
  CHECK(s.rate(0) == 2.0);
  CHECK(s.rate(3) == 0.5);
}

TEST_CASE("generated tasks are seeded and shaped") {
  const TaskSpec spec{TaskKind::kLogistic, 5, 100, 40, 0.0, 1.0, 0.0};
  const auto a = generate_task(spec, 9);
  const auto b = generate_task(spec, 9);
  const auto c = generate_task(spec, 10);
  CHECK(a.train.features == b.train.features);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.train.features != c.train.features);
  CHECK(a.train.size() == 100);
  CHECK(a.test.size() == 40);
  CHECK((a.train.features.col(4).array() == 1.0).all());
  CHECK_THROWS_AS(generate_task({TaskKind::kLogistic, 1, 10, 10, 0, 1, 0}, 1), ConfigError);
}

TEST_CASE("quadratic full-batch step with unit rate lands on the minimizer") {
  const auto data = generate_task({TaskKind::kQuadratic, 3, 8, 4, 0, 1, 0}, 2);
  const DataShard shard = shard_of(data.train);
  const WeightVector mean = data.train.features.colwise().mean().transpose();
  std::uint64_t t = 0;
  std::mt19937_64 rng(1);
  const WeightVector w = local_train(data.task, WeightVector::Constant(3, 4.0), shard, {1, 8, LrSchedule{1.0}}, t, rng);
  CHECK(t == 1);
  CHECK((w - mean).norm() < 1e-12);

  // Fixed point: already at the minimizer.
  t = 0;
  CHECK((local_train(data.task, mean, shard, {3, 8, LrSchedule{0.5}}, t, rng) - mean).norm() < 1e-12);
  CHECK(t == 3);
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (TaskKind kind : {TaskKind::kLogistic, TaskKind::kQuadratic}) {
    auto data = generate_task({kind, 6, 50, 10, 0.1, 1.0, 0.01}, 8);
    for (int point = 0; point < 100; ++point) {
      WeightVector w(6);
      for (int c = 0; c < 6; ++c) w[c] = g(rng);
      const WeightVector exact = data.task.gradient(w, data.train);
      const WeightVector approx = numeric_gradient(data.task, w, data.train);
      CHECK((exact - approx).norm() <= 1e-5 * std::max(1.0, exact.norm()));
      const Eigen::MatrixXd rows = data.task.example_gradients(w, data.train);
      CHECK((rows.colwise().mean().transpose() - exact).norm() < 1e-12);
    }
  }
}

TEST_CASE("loss is non-negative") {
  auto data = generate_task({TaskKind::kLogistic, 4, 30, 10, 0.2, 1, 0}, 3);
  CHECK(data.task.loss(WeightVector::Zero(4), data.train) >= 0);
  CHECK(data.task.loss(100 * data.task.optimum, data.train) >= 0);
}

TEST_CASE("evaluation") {
  auto data = generate_task({TaskKind::kLogistic, 5, 50, 200, 0.0, 1, 0}, 6);
  CHECK(evaluate(data.task, data.task.optimum, data.test).accuracy == 1.0);

  // Zero margin predicts class 0.
  const double zeros = 1.0 - data.test.labels.mean();
  CHECK(evaluate(data.task, WeightVector::Zero(5), data.test).accuracy == Approx(zeros));
  CHECK(std::abs(zeros - 0.5) < 0.15);

  std::vector<std::size_t> rev(200);
  for (std::size_t i = 0; i < 200; ++i) rev[i] = 199 - i;
  const WeightVector w = WeightVector::Constant(5, 0.3);
  const auto e1 = evaluate(data.task, w, data.test);
  const auto e2 = evaluate(data.task, w, data.test.subset(rev));
  CHECK(e1.accuracy == e2.accuracy);
  CHECK(e1.loss == Approx(e2.loss).epsilon(1e-14));

  auto quad = generate_task({TaskKind::kQuadratic, 2, 10, 10, 0, 1, 0}, 1);
  CHECK(std::isnan(evaluate(quad.task, WeightVector::Zero(2), quad.test).accuracy));
}

TEST_CASE("partitions cover the dataset disjointly") {
  auto data = generate_task({TaskKind::kLogistic, 3, 300, 10, 0, 1, 0}, 5);
  for (double alpha : {0.1, 1.0, 100.0}) {
    const auto shards = dirichlet_partition(data.train, 6, alpha, 12);
    std::multiset<std::size_t> rows;
    for (std::size_t i = 0; i < shards.size(); ++i) {
      CHECK(shards[i].owner == i);
      CHECK(shards[i].size() >= 1);
      CHECK(shards[i].size() == static_cast<Eigen::Index>(shards[i].source_rows.size()));
      rows.insert(shards[i].source_rows.begin(), shards[i].source_rows.end());
    }
    CHECK(rows.size() == 300);
    CHECK(std::set<std::size_t>(rows.begin(), rows.end()).size() == 300);
  }
  const auto iid = iid_partition(data.train, 7, 3);
  Eigen::Index total = 0;
  for (const auto& s : iid) {
    CHECK((s.size() == 42 || s.size() == 43));
    total += s.size();
  }
  CHECK(total == 300);
  CHECK_THROWS_AS(dirichlet_partition(data.train, 4, 0.0, 1), PartitionError);
  CHECK_THROWS_AS(iid_partition(data.train, 301, 1), PartitionError);
}

TEST_CASE("dirichlet partition is seeded and nearly uniform for large alpha") {
  auto data = generate_task({TaskKind::kLogistic, 3, 6000, 10, 0, 1, 0}, 8);
  const auto a = dirichlet_partition(data.train, 4, 1.0, 77);
  const auto b = dirichlet_partition(data.train, 4, 1.0, 77);
  for (int i = 0; i < 4; ++i) CHECK(a[i].source_rows == b[i].source_rows);

  const auto flat = dirichlet_partition(data.train, 4, 1e6, 77);
  for (double cls : {0.0, 1.0}) {
    const double total = (data.train.labels.array() == cls).count();
    for (const auto& s : flat) {
      const double share = (s.data.labels.array() == cls).count() / total;
      CHECK(std::abs(share - 0.25) < 0.01);
    }
  }
}

TEST_CASE("training is deterministic under a seed") {
  auto data = generate_task({TaskKind::kLogistic, 4, 120, 10, 0.05, 1, 0}, 2);
  const auto shards = dirichlet_partition(data.train, 3, 1.0, 4);
  auto run = [&] {
    std::uint64_t t = 0;
    std::mt19937_64 rng(99);
    return local_train(data.task, WeightVector::Zero(4), shards[1], {2, 8, LrSchedule{0.5}}, t, rng);
  };
  const WeightVector a = run();
  const WeightVector b = run();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 4) == 0);
}

TEST_CASE("divergence is reported") {
  auto data = generate_task({TaskKind::kQuadratic, 2, 20, 5, 0, 1, 0}, 1);
  std::uint64_t t = 0;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(
      local_train(data.task, WeightVector::Zero(2), shard_of(data.train), {2000, 1, LrSchedule{1e300}}, t, rng),
      DivergenceError);
}

TEST_CASE("gradient noise statistics") {
  const Task task = quadratic_task(2);
  Dataset two;
  two.features.resize(2, 2);
  two.features << 3.0, 4.0, -3.0, -4.0;
  two.labels = Eigen::VectorXd::Zero(2);
  const std::vector<DataShard> shards{shard_of(two)};

  const auto one = grad_stats(task, WeightVector::Zero(2), shards, 1);
  CHECK(one.grad_norm == Approx(0.0));
  // d * sigma^2 = |g|^2 = 25.
  CHECK(2 * one.sigma * one.sigma == Approx(25.0));
  CHECK(grad_stats(task, WeightVector::Zero(2), shards, 2).sigma == 0.0);

  auto data = generate_task({TaskKind::kLogistic, 3, 12, 5, 0.1, 1, 0}, 3);
  const std::vector<DataShard> small{shard_of(data.train)};
  const WeightVector w = WeightVector::Constant(3, 0.2);
  double last = 1e300;
  for (int b : {1, 2, 4, 6}) {
    const double s = grad_stats(data.task, w, small, b).sigma;
    CHECK(s * s == Approx(enumerated_sigma_sq(data.task, w, data.train, b)).epsilon(1e-10));
    CHECK(s < last);
    last = s;
  }

  auto big = generate_task({TaskKind::kLogistic, 5, 400, 5, 0.1, 1, 0}, 3);
  const std::vector<DataShard> many{shard_of(big.train)};
  const double s1 = grad_stats(big.task, WeightVector::Zero(5), many, 1).sigma;
  const double s4 = grad_stats(big.task, WeightVector::Zero(5), many, 4).sigma;
  const double s16 = grad_stats(big.task, WeightVector::Zero(5), many, 16).sigma;
  CHECK(s1 > s4);
  CHECK(s4 > s16);
}
