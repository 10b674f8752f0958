#include "defl/client.hpp"

#include <algorithm>

namespace defl {

ClientState::ClientState(ClientConfig config, WeightVector bootstrap)
    : config_(std::move(config)), current_weights_(bootstrap), bootstrap_(std::move(bootstrap)) {}

bool ClientState::can_aggregate(int available) const {
  switch (config_.rule) {
    case AggregationRule::kFedAvg:
      return available >= 1;
    case AggregationRule::kKrum: {
      int nb = config_.params.resolved_neighborhood(available);
      return nb >= 1 && available >= nb + 1;
    }
    case AggregationRule::kMultiKrum:
      return config_.params.feasible(available);
  }
  return false;
}

std::optional<RoundPlan> ClientState::maybe_start_round(RoundId observed_r_round, const LastSnapshot& last,
                                                        SimTime now) {
  if (phase_ != Phase::kIdle || l_round_id_ > observed_r_round) return std::nullopt;

  RoundPlan plan;
  plan.start_time = now;
  plan.target_round = observed_r_round + 1;

  std::vector<WeightVector> vs;
  std::vector<NodeId> owners;
  std::vector<double> sizes;
  for (std::size_t i = 0; i < last.slots.size(); ++i) {
    if (!last.slots[i]) continue;
    vs.push_back(*last.slots[i]);
    owners.push_back(static_cast<NodeId>(i));
    if (config_.params.sample_sizes) sizes.push_back((*config_.params.sample_sizes)[i]);
  }
  plan.candidates = static_cast<int>(vs.size());

  if (observed_r_round == 0 && vs.empty()) {
    plan.w_agg = bootstrap_;
  } else if (!can_aggregate(plan.candidates)) {
    ++fallbacks_;
    plan.w_agg = current_weights_;
  } else {
    AggregationParams params = config_.params;
    if (params.sample_sizes) params.sample_sizes = sizes;
    plan.w_agg = aggregate(config_.rule, vs, owners, params);
    plan.aggregated = true;
  }
  phase_ = Phase::kTraining;
  in_flight_ = plan.target_round;
  return plan;
}

std::vector<ScheduledTx> ClientState::finish_round(const RoundPlan& plan, const WeightVector& trained, SimTime now) {
  if (phase_ != Phase::kTraining || in_flight_ != plan.target_round) {
    throw ContractError("finish_round without a matching round in training");
  }
  current_weights_ = trained;
  phase_ = Phase::kAwaitingUpd;
  const SimTime elapsed = now - plan.start_time;
  return {
      {Transaction::upd(config_.id, plan.target_round, digest(trained)), now, false},
      {Transaction::agg(config_.id, plan.target_round), plan.start_time + std::max(config_.gst_lt, elapsed), true},
  };
}

bool ClientState::on_upd_response(Response response, RoundId target) {
  if (phase_ != Phase::kAwaitingUpd || in_flight_ != target) return false;
  if (response == Response::kOk) {
    l_round_id_ = target;
    phase_ = Phase::kWaitingAgg;
    return true;
  }
  // Raced a rotation (or sent a wrong round): give up on this round and
  // re-read r_round_id on the next start attempt.
  ++abandoned_;
  phase_ = Phase::kIdle;
  in_flight_.reset();
  return false;
}

void ClientState::on_agg_sent() {
  if (phase_ == Phase::kWaitingAgg) {
    phase_ = Phase::kIdle;
    in_flight_.reset();
  }
}

}  // namespace defl
