#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "defl/adversary.hpp"
#include "defl/aggregation.hpp"
#include "defl/consensus.hpp"
#include "defl/core.hpp"
#include "defl/node.hpp"
#include "defl/simnet.hpp"
#include "defl/tasks.hpp"

namespace defl {

enum class PartitionKind { kDirichlet, kIid };

struct ExperimentConfig {
  std::string name = "run";
  // system.f bounds consensus and the AGG quorum; system.d mirrors task.d.
  SystemConfig system;
  TaskSpec task;
  PartitionKind partition = PartitionKind::kDirichlet;
  double alpha = 1.0;
  AttackSpec attack;
  // Consensus-crash victims go down at this time.
  SimTime crash_time = 0;
  AggregationRule rule = AggregationRule::kMultiKrum;
  // Byzantine inputs the aggregation rule is sized for.
  int f_assumed = 0;
  DelayModel network;
  SimTime view_timeout = 150;
  SimTime heartbeat = 20;
  int max_batch = 64;
  SimTime train_min = 10;
  SimTime train_max = 60;
  SimTime fetch_wait = 40;
  TrainParams training;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  // Extra simulated time to keep running after the last round completes.
  SimTime drain = 0;
  std::optional<SimTime> time_limit;

  SimTime resolved_time_limit() const;
};

/// Defaults for n nodes: f = floor((n - 3) / 3), f_assumed = floor((n - 1) / 3).
ExperimentConfig default_config(int n);

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json(const ExperimentConfig& config);
/// Throws ConfigError naming the first violated bound.
void validate_experiment(const ExperimentConfig& config);

struct RunRecord {
  std::uint64_t seed = 0;
  RoundId round = 0;
  std::string rule;
  std::string attack;
  double beta = 0.0;
  double accuracy = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::uint64_t bytes_sent_total = 0;
  std::uint64_t bytes_received_total = 0;
  std::uint64_t bytes_sent_max_node = 0;
  std::uint64_t bytes_received_max_node = 0;
  std::uint64_t pool_peak_bytes = 0;
  std::array<std::uint64_t, 4> responses{};
  SimTime sim_time = 0;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<RunRecord> records;
  SimReport network;
  std::uint64_t pool_peak_bytes = 0;
  // Honest replicas agree on every committed height they share.
  bool logs_consistent = true;
  // Honest replicas report equal state digests for every round they reached.
  bool states_consistent = true;
  std::vector<std::string> violations;
  std::uint64_t view_timeouts = 0;
  std::uint64_t committed_height = 0;
  // Reference-node aggregations with at least one Byzantine candidate available,
  // and how many of those selected one.
  int contested_rounds = 0;
  int poisoned_selected = 0;
  // Largest commit delay max(0, commit - max(submitted, gst)) over honest own
  // transactions, and how many never committed.
  SimTime worst_commit_delay = 0;
  std::uint64_t uncommitted = 0;
  int fallbacks = 0;
  int abandoned = 0;
  // Aggregates checked against another honest node's result for the same inputs.
  std::uint64_t aggregate_comparisons = 0;

  double final_accuracy() const { return records.empty() ? 0.0 : records.back().accuracy; }
  double final_grad_norm() const { return records.empty() ? 0.0 : records.back().grad_norm; }
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct ExperimentSummary {
  ExperimentConfig config;
  std::vector<RunResult> runs;
  MetricSummary accuracy;
  MetricSummary loss;
  MetricSummary grad_norm;
  MetricSummary bytes_received_total;
  MetricSummary pool_peak_bytes;
};

/// One seed. Throws StallError when the rounds do not complete in time.
RunResult run_once(const ExperimentConfig& config, std::uint64_t seed);
/// Every seed in config.seeds; summaries use the final round of each run.
ExperimentSummary run_experiment(const ExperimentConfig& config);

MetricSummary summarize(const std::vector<double>& xs);

const std::vector<std::string>& csv_columns();
std::string csv_text(const std::vector<RunRecord>& records);
/// Throws ParameterError on an empty record list; I/O failures as std::runtime_error.
void emit_csv(const std::vector<RunRecord>& records, const std::filesystem::path& path);

struct ScenarioRow {
  std::string label;
  ExperimentConfig config;
};

std::vector<std::string> scenario_names();
/// Each grid row appears once per aggregation rule (fedavg, multi_krum).
std::vector<ScenarioRow> scenario_table(const std::string& name);

}  // namespace defl
