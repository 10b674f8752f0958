#include "defl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace defl {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_dim(const Task& task, const WeightVector& w, const Dataset& data) {
  if (w.size() != task.d) {
    throw DimensionError("weights have dimension " + std::to_string(w.size()) + ", task expects " +
                         std::to_string(task.d));
  }
  if (data.size() > 0 && data.features.cols() != task.d) {
    throw DimensionError("features have dimension " + std::to_string(data.features.cols()) + ", task expects " +
                         std::to_string(task.d));
  }
}

}  // namespace

std::string to_string(TaskKind kind) { return kind == TaskKind::kQuadratic ? "quadratic" : "logistic"; }

TaskKind parse_task_kind(const std::string& name) {
  if (name == "quadratic" || name == "QUADRATIC") return TaskKind::kQuadratic;
  if (name == "logistic" || name == "LOGISTIC") return TaskKind::kLogistic;
  throw ConfigError("unknown task kind '" + name + "'");
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels[static_cast<Eigen::Index>(i)] = labels[static_cast<Eigen::Index>(rows[i])];
  }
  return out;
}

double Task::loss(const WeightVector& w, const Dataset& data) const {
  check_dim(*this, w, data);
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  if (kind == TaskKind::kQuadratic) {
    total = 0.5 * (data.features.rowwise() - w.transpose()).rowwise().squaredNorm().sum();
  } else {
    const Eigen::VectorXd z = data.features * w;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z[i]) - data.labels[i] * z[i];
  }
  return total / static_cast<double>(data.size()) + 0.5 * l2 * w.squaredNorm();
}

WeightVector Task::gradient(const WeightVector& w, const Dataset& data) const {
  check_dim(*this, w, data);
  WeightVector g = l2 * w;
  if (data.size() == 0) return g;
  const double inv = 1.0 / static_cast<double>(data.size());
  if (kind == TaskKind::kQuadratic) {
    g += w - data.features.colwise().mean().transpose();
  } else {
    const Eigen::VectorXd z = data.features * w;
    Eigen::VectorXd residual(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) residual[i] = sigmoid(z[i]) - data.labels[i];
    g += inv * (data.features.transpose() * residual);
  }
  return g;
}

Eigen::MatrixXd Task::example_gradients(const WeightVector& w, const Dataset& data) const {
  check_dim(*this, w, data);
  Eigen::MatrixXd rows(data.size(), d);
  if (kind == TaskKind::kQuadratic) {
    rows = (-data.features).rowwise() + w.transpose();
  } else {
    const Eigen::VectorXd z = data.features * w;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      rows.row(i) = (sigmoid(z[i]) - data.labels[i]) * data.features.row(i);
    }
  }
  rows.rowwise() += l2 * w.transpose();
  return rows;
}

TaskData generate_task(const TaskSpec& spec, std::uint64_t seed) {
  if (spec.d < 1) throw ConfigError("task dimension must be positive");
  if (spec.kind == TaskKind::kLogistic && spec.d < 2) throw ConfigError("logistic task needs d >= 2 (bias column)");
  if (spec.train_examples < 1 || spec.test_examples < 1) throw ConfigError("task needs train and test examples");
  if (spec.label_noise < 0 || spec.label_noise > 0.5) throw ConfigError("label_noise outside [0, 0.5]");

  std::mt19937_64 rng(mix_seed(seed, 0x7a5c));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  TaskData out;
  out.task.kind = spec.kind;
  out.task.d = spec.d;
  out.task.l2 = spec.l2;
  out.task.optimum = WeightVector::NullaryExpr(spec.d, [&](Eigen::Index) { return normal(rng); });

  if (spec.kind == TaskKind::kLogistic) {
    auto& teacher = out.task.optimum;
    teacher[spec.d - 1] = 0.0;
    teacher *= spec.scale / teacher.head(spec.d - 1).norm();
  }

  auto make = [&](int count) {
    Dataset data;
    data.features.resize(count, spec.d);
    data.labels = Eigen::VectorXd::Zero(count);
    for (int i = 0; i < count; ++i) {
      if (spec.kind == TaskKind::kQuadratic) {
        for (int c = 0; c < spec.d; ++c) data.features(i, c) = out.task.optimum[c] + spec.scale * normal(rng);
      } else {
        for (int c = 0; c + 1 < spec.d; ++c) data.features(i, c) = normal(rng);
        data.features(i, spec.d - 1) = 1.0;
        double label = data.features.row(i).dot(out.task.optimum) > 0 ? 1.0 : 0.0;
        if (unif(rng) < spec.label_noise) label = 1.0 - label;
        data.labels[i] = label;
      }
    }
    return data;
  };
  out.train = make(spec.train_examples);
  out.test = make(spec.test_examples);
  return out;
}

std::vector<DataShard> dirichlet_partition(const Dataset& data, int n, double alpha, std::uint64_t seed) {
  if (n < 1) throw PartitionError("need at least one shard");
  if (!(alpha > 0)) throw PartitionError("dirichlet alpha must be positive");

  // Classes are the distinct label values, in ascending order.
  std::vector<double> classes(data.labels.data(), data.labels.data() + data.size());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  std::vector<std::vector<std::size_t>> by_class(classes.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    auto c = std::lower_bound(classes.begin(), classes.end(), data.labels[i]) - classes.begin();
    by_class[static_cast<std::size_t>(c)].push_back(static_cast<std::size_t>(i));
  }
  for (const auto& members : by_class) {
    if (members.size() < static_cast<std::size_t>(n)) {
      throw PartitionError("every class needs at least n examples");
    }
  }

  std::mt19937_64 rng(mix_seed(seed, 0xd1c1));
  std::gamma_distribution<double> gamma(alpha, 1.0);
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(n));
    for (auto members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      std::vector<double> p(static_cast<std::size_t>(n));
      double total = 0;
      for (auto& x : p) total += (x = gamma(rng));
      if (!(total > 0)) {
        // alpha so small that every draw underflowed; give the class to one node.
        std::fill(p.begin(), p.end(), 0.0);
        p[std::uniform_int_distribution<std::size_t>(0, p.size() - 1)(rng)] = 1.0;
        total = 1.0;
      }
      // Cut points at the rounded cumulative proportions.
      double cumulative = 0;
      std::size_t begin = 0;
      for (int node = 0; node < n; ++node) {
        cumulative += p[static_cast<std::size_t>(node)] / total;
        std::size_t end = node + 1 == n ? members.size()
                                        : std::min(members.size(), static_cast<std::size_t>(std::llround(
                                                                       cumulative * static_cast<double>(members.size()))));
        end = std::max(end, begin);
        rows[static_cast<std::size_t>(node)].insert(rows[static_cast<std::size_t>(node)].end(),
                                                    members.begin() + static_cast<std::ptrdiff_t>(begin),
                                                    members.begin() + static_cast<std::ptrdiff_t>(end));
        begin = end;
      }
    }
    if (std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.empty(); })) continue;

    std::vector<DataShard> shards;
    shards.reserve(rows.size());
    for (int node = 0; node < n; ++node) {
      auto& r = rows[static_cast<std::size_t>(node)];
      std::sort(r.begin(), r.end());
      shards.push_back({static_cast<NodeId>(node), data.subset(r), r});
    }
    return shards;
  }
  throw PartitionError("could not draw a partition without empty shards");
}

std::vector<DataShard> iid_partition(const Dataset& data, int n, std::uint64_t seed) {
  if (n < 1 || data.size() < n) throw PartitionError("need at least one example per shard");
  std::vector<std::size_t> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0x11d));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<DataShard> shards;
  const std::size_t total = order.size();
  for (int node = 0; node < n; ++node) {
    std::size_t begin = total * static_cast<std::size_t>(node) / static_cast<std::size_t>(n);
    std::size_t end = total * static_cast<std::size_t>(node + 1) / static_cast<std::size_t>(n);
    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(rows.begin(), rows.end());
    shards.push_back({static_cast<NodeId>(node), data.subset(rows), rows});
  }
  return shards;
}

WeightVector local_train(const Task& task, const WeightVector& w0, const DataShard& shard, const TrainParams& params,
                         std::uint64_t& step_counter, std::mt19937_64& rng) {
  check_dim(task, w0, shard.data);
  if (!(params.schedule.gamma0 > 0)) throw ParameterError("learning rate gamma0 must be positive");
  if (params.batch_size < 1 || params.epochs < 0) throw ParameterError("invalid batch size or epoch count");

  WeightVector w = w0;
  const auto count = static_cast<std::size_t>(shard.size());
  if (count == 0) return w;

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(params.batch_size);
  Dataset mini;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < count; begin += batch) {
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                    order.begin() + static_cast<std::ptrdiff_t>(std::min(count, begin + batch)));
      mini = shard.data.subset(rows);
      w -= params.schedule.rate(step_counter) * task.gradient(w, mini);
      ++step_counter;
      if (!w.allFinite()) {
        throw DivergenceError("local training diverged at step " + std::to_string(step_counter) + " (owner " +
                              std::to_string(shard.owner) + ", gamma=" +
                              std::to_string(params.schedule.rate(step_counter - 1)) + ")");
      }
    }
  }
  return w;
}

Evaluation evaluate(const Task& task, const WeightVector& w, const Dataset& test) {
  Evaluation e;
  e.loss = task.loss(w, test);
  if (task.kind == TaskKind::kQuadratic) {
    e.accuracy = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  if (test.size() == 0) return e;
  const Eigen::VectorXd z = test.features * w;
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double predicted = z[i] > 0 ? 1.0 : 0.0;
    if (predicted == test.labels[i]) ++correct;
  }
  e.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return e;
}

Dataset concat(const std::vector<DataShard>& shards) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& s : shards) {
    rows += s.size();
    cols = std::max(cols, s.data.features.cols());
  }
  Dataset out;
  out.features.resize(rows, cols);
  out.labels.resize(rows);
  Eigen::Index at = 0;
  for (const auto& s : shards) {
    out.features.middleRows(at, s.size()) = s.data.features;
    out.labels.segment(at, s.size()) = s.data.labels;
    at += s.size();
  }
  return out;
}

GradStats grad_stats(const Task& task, const WeightVector& w, const std::vector<DataShard>& shards, int batch_size) {
  const Dataset all = concat(shards);
  if (all.size() == 0) throw ParameterError("grad_stats needs non-empty shards");
  const Eigen::MatrixXd g = task.example_gradients(w, all);
  const Eigen::RowVectorXd mean = g.colwise().mean();
  GradStats stats;
  stats.grad_norm = mean.norm();

  const double n = static_cast<double>(all.size());
  const double b = std::max(1, batch_size);
  if (b >= n) return stats;
  const double spread = (g.rowwise() - mean).rowwise().squaredNorm().mean();
  const double batch_var = spread / b * (n - b) / (n - 1);
  stats.sigma = std::sqrt(batch_var / static_cast<double>(task.d));
  return stats;
}

}  // namespace defl
