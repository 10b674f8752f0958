#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "defl/core.hpp"

namespace defl {

enum class TaskKind { kQuadratic, kLogistic };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

/// Row-per-example design matrix with 0/1 labels (unused by the quadratic task).
struct Dataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;

  Eigen::Index size() const { return features.rows(); }
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct DataShard {
  NodeId owner = 0;
  Dataset data;
  // Row indices into the dataset the shard was cut from.
  std::vector<std::size_t> source_rows;

  Eigen::Index size() const { return data.size(); }
};

/// gamma_t = gamma0 / (1 + t).
struct LrSchedule {
  double gamma0 = 0.1;

  double rate(std::uint64_t t) const { return gamma0 / (1.0 + static_cast<double>(t)); }
};

struct TaskSpec {
  TaskKind kind = TaskKind::kLogistic;
  int d = 20;
  int train_examples = 2000;
  int test_examples = 500;
  double label_noise = 0.0;
  // Logistic: norm of the non-bias teacher weights. Quadratic: spread of samples around the optimum.
  double scale = 1.0;
  double l2 = 0.0;
};

/// Loss Q(w) and its gradient for one of the synthetic learning problems.
///  quadratic: per-example loss 1/2 |w - x|^2, optimum at the sample mean.
///  logistic:  binary cross-entropy of sigmoid(x.w); the last feature is a constant bias column.
struct Task {
  TaskKind kind = TaskKind::kLogistic;
  int d = 0;
  WeightVector optimum;  // quadratic center or logistic teacher
  double l2 = 0.0;

  double loss(const WeightVector& w, const Dataset& data) const;
  WeightVector gradient(const WeightVector& w, const Dataset& data) const;
  /// Row i holds the gradient of example i's loss.
  Eigen::MatrixXd example_gradients(const WeightVector& w, const Dataset& data) const;
};

struct TaskData {
  Task task;
  Dataset train;
  Dataset test;
};

TaskData generate_task(const TaskSpec& spec, std::uint64_t seed);

/// For each class, draw per-node proportions from Dir(alpha * 1_n) and deal
/// that class's examples out without replacement. Redraws while any shard is
/// empty; PartitionError if that keeps failing.
std::vector<DataShard> dirichlet_partition(const Dataset& data, int n, double alpha, std::uint64_t seed);
/// Shuffle then cut into n nearly equal shards.
std::vector<DataShard> iid_partition(const Dataset& data, int n, std::uint64_t seed);

struct TrainParams {
  int epochs = 1;
  int batch_size = 32;
  LrSchedule schedule;
};

/// Mini-batch SGD from w0 over shuffled batches of the shard. step_counter is
/// the global t of gamma_t and advances by one per batch.
WeightVector local_train(const Task& task, const WeightVector& w0, const DataShard& shard, const TrainParams& params,
                         std::uint64_t& step_counter, std::mt19937_64& rng);

struct Evaluation {
  double accuracy = 0.0;  // NaN for the quadratic task
  double loss = 0.0;
};

/// Logistic prediction is class 1 iff x.w > 0; a zero margin predicts class 0.
Evaluation evaluate(const Task& task, const WeightVector& w, const Dataset& test);

struct GradStats {
  double grad_norm = 0.0;
  double sigma = 0.0;
};

/// Full gradient norm over the union of the shards and sigma(w) with
/// d * sigma^2 = E |G_b(w) - grad Q(w)|^2 for a uniformly drawn mini-batch
/// of batch_size examples without replacement (exact, not sampled).
GradStats grad_stats(const Task& task, const WeightVector& w, const std::vector<DataShard>& shards, int batch_size);

Dataset concat(const std::vector<DataShard>& shards);

}  // namespace defl
