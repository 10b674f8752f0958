#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <unordered_map>
#include <vector>

#include "defl/adversary.hpp"
#include "defl/client.hpp"
#include "defl/consensus.hpp"
#include "defl/replica.hpp"
#include "defl/simnet.hpp"
#include "defl/storage_pool.hpp"
#include "defl/tasks.hpp"

namespace defl {

struct NodeParams {
  int n = 4;
  // Byzantine bound of the replicated state machine (AGG quorum f + 1).
  int f = 0;
  int tau = 2;
  SimTime gst_lt = 200;
  ConsensusConfig consensus;
  // Simulated training takes a uniform number of ticks in [train_min, train_max].
  SimTime train_min = 10;
  SimTime train_max = 60;
  // How long a round start waits for missing last-round weights.
  SimTime fetch_wait = 40;
  TrainParams train;
  AggregationRule rule = AggregationRule::kMultiKrum;
  AggregationParams aggregation;
  // No rounds are trained past this target.
  RoundId max_round = 10;
};

/// Inputs every node sees identically.
struct SharedSetup {
  TaskData task;
  std::vector<DataShard> shards;
  WeightVector bootstrap;
  std::shared_ptr<const Signer> signer;
};

struct TxTiming {
  Transaction tx;
  SimTime submitted = 0;
  std::optional<SimTime> committed;
};

struct NodeMetrics {
  std::array<std::uint64_t, 4> responses{};  // indexed by Response
  // ReplicaState digest right after rotating into round r.
  std::map<RoundId, Digest> state_digests;
  std::vector<TxTiming> own_transactions;
  std::uint64_t upd_retries = 0;
  std::uint64_t fetches_sent = 0;
  std::uint64_t fetches_rejected = 0;
  std::uint64_t stale_fetch_responses = 0;
  std::uint64_t consensus_warnings = 0;
};

/// Called whenever a node fixes the aggregate it starts a round from.
using RoundObserver = std::function<void(NodeId node, RoundId completed_round, const LastSnapshot& last,
                                         const RoundPlan& plan)>;

/// One DeFL participant: a client loop and a replica loop sharing one event
/// queue, a content-addressed pool and a consensus instance.
class DeflNode final : public Process {
 public:
  DeflNode(NodeId id, NodeParams params, std::shared_ptr<const SharedSetup> setup, AttackSpec attack,
           std::uint64_t seed);

  void on_start(Context& ctx) override;
  void on_message(Context& ctx, NodeId from, const Bytes& payload) override;
  void on_timer(Context& ctx, std::uint64_t tag) override;

  void set_observer(RoundObserver observer) { observer_ = std::move(observer); }

  NodeId id() const { return id_; }
  bool byzantine() const { return attack_.is_victim(id_); }
  const ReplicaState& state() const { return state_; }
  const StoragePool& pool() const { return pool_; }
  const ClientState& client() const { return client_; }
  const HotStuffReplica& consensus() const { return consensus_; }
  const NodeMetrics& metrics() const { return metrics_; }
  /// True once the node reported the aggregate of round max_round.
  bool finished() const { return finished_; }

 private:
  enum TimerKind : std::uint64_t { kViewTimer = 1, kHeartbeatTimer = 2, kTrainTimer = 3, kSubmitTimer = 4, kGateTimer = 5 };

  void apply(Context& ctx, ConsensusOutput out);
  void execute_committed(Context& ctx, const Transaction& tx);
  void submit(Context& ctx, const Transaction& tx);
  void submit_due(Context& ctx);
  void try_start_round(Context& ctx);
  void finish_training(Context& ctx);
  void fetch(Context& ctx, const Digest& dg, NodeId owner, RoundId round);
  void retry_stale_upds(Context& ctx);

  NodeId id_;
  NodeParams params_;
  std::shared_ptr<const SharedSetup> setup_;
  AttackSpec attack_;
  DataShard shard_;

  HotStuffReplica consensus_;
  ReplicaState state_;
  StoragePool pool_;
  ClientState client_;

  std::mt19937_64 train_rng_;
  std::mt19937_64 attack_rng_;
  std::uint64_t schedule_counter_ = 0;
  std::uint64_t seed_;
  std::uint64_t step_counter_ = 0;

  std::optional<RoundPlan> training_;
  std::vector<ScheduledTx> scheduled_;
  std::set<RoundId> agg_submitted_;
  // Own UPDs awaiting execution: tx id -> round the client planned.
  std::unordered_map<Digest, RoundId, DigestHash> pending_upd_;
  std::unordered_map<Digest, std::size_t, DigestHash> own_index_;
  std::set<Digest> retried_;
  // Outstanding weight fetches: digest -> round tag.
  std::map<Digest, RoundId> fetching_;
  std::optional<SimTime> gate_deadline_;
  bool finished_ = false;

  NodeMetrics metrics_;
  RoundObserver observer_;
};

}  // namespace defl
