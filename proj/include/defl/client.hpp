#pragma once

#include <optional>
#include <vector>

#include "defl/aggregation.hpp"
#include "defl/core.hpp"
#include "defl/replica.hpp"

namespace defl {

struct RoundPlan {
  SimTime start_time = 0;
  WeightVector w_agg;
  RoundId target_round = 0;
  // False when w_agg is the bootstrap or a fallback to current_weights.
  bool aggregated = false;
  int candidates = 0;
};

/// A transaction the node should submit at `at`. When after_upd_ok is set the
/// node additionally holds it until its own UPD for the round was accepted.
struct ScheduledTx {
  Transaction tx;
  SimTime at = 0;
  bool after_upd_ok = false;
};

struct ClientConfig {
  NodeId id = 0;
  SimTime gst_lt = 100;
  AggregationRule rule = AggregationRule::kMultiKrum;
  AggregationParams params;
};

/// Local-training loop of one node: aggregate last-round weights, train,
/// commit UPD, hold until GST_LT, commit AGG.
class ClientState {
 public:
  enum class Phase { kIdle, kTraining, kAwaitingUpd, kWaitingAgg };

  ClientState(ClientConfig config, WeightVector bootstrap);

  /// Starts a round when l_round_id <= observed_r_round and no round is in
  /// flight. Aggregates the W_LAST snapshot with the configured rule; at
  /// round 0 uses the shared bootstrap weights; with too few candidates
  /// falls back to current_weights.
  std::optional<RoundPlan> maybe_start_round(RoundId observed_r_round, const LastSnapshot& last, SimTime now);

  /// UPD(id, target, digest(trained)) now, then AGG(target) at
  /// start + max(gst_lt, elapsed), gated on the UPD being accepted.
  std::vector<ScheduledTx> finish_round(const RoundPlan& plan, const WeightVector& trained, SimTime now);

  /// Response of the local replica to this client's UPD for `target`.
  /// Returns true when the round continues towards its AGG.
  bool on_upd_response(Response response, RoundId target);

  void on_agg_sent();

  const ClientConfig& config() const { return config_; }
  NodeId id() const { return config_.id; }
  RoundId l_round_id() const { return l_round_id_; }
  Phase phase() const { return phase_; }
  std::optional<RoundId> in_flight_round() const { return in_flight_; }
  const WeightVector& current_weights() const { return current_weights_; }
  int fallbacks() const { return fallbacks_; }
  int abandoned() const { return abandoned_; }

 private:
  bool can_aggregate(int available) const;

  ClientConfig config_;
  RoundId l_round_id_ = 0;
  WeightVector current_weights_;
  WeightVector bootstrap_;
  Phase phase_ = Phase::kIdle;
  std::optional<RoundId> in_flight_;
  int fallbacks_ = 0;
  int abandoned_ = 0;
};

}  // namespace defl
