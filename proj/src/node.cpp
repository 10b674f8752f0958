#include "defl/node.hpp"

#include <algorithm>

namespace defl {

namespace {

constexpr int kKindShift = 56;
constexpr std::uint64_t kPayloadMask = (std::uint64_t{1} << kKindShift) - 1;

std::uint64_t timer_tag(std::uint64_t kind, std::uint64_t payload) { return (kind << kKindShift) | (payload & kPayloadMask); }

Bytes encode_tx_message(const Transaction& tx) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(MessageKind::kTransaction));
  encode(w, tx);
  return std::move(w).bytes();
}

}  // namespace

DeflNode::DeflNode(NodeId id, NodeParams params, std::shared_ptr<const SharedSetup> setup, AttackSpec attack,
                   std::uint64_t seed)
    : id_(id),
      params_(std::move(params)),
      setup_(std::move(setup)),
      attack_(std::move(attack)),
      shard_(setup_->shards.at(id)),
      consensus_(params_.consensus, id, setup_->signer,
                 attack_.is_victim(id) ? attack_.consensus : ConsensusFault::kNone),
      state_(params_.n),
      client_(ClientConfig{id, params_.gst_lt, params_.rule, params_.aggregation}, setup_->bootstrap),
      train_rng_(mix_seed(seed, 0x747261696e, id)),
      attack_rng_(mix_seed(seed, 0x61747461636b, id)),
      seed_(mix_seed(seed, 0x736368656400, id)) {
  if (byzantine() && attack_.kind == AttackKind::kLabelFlip) shard_ = flip_labels(attack_, std::move(shard_));
}

void DeflNode::on_start(Context& ctx) {
  apply(ctx, consensus_.start(ctx.now()));
  try_start_round(ctx);
}

void DeflNode::apply(Context& ctx, ConsensusOutput out) {
  for (auto& m : out.messages) {
    Bytes bytes = encode(m.msg);
    if (m.to) {
      ctx.send(*m.to, std::move(bytes));
    } else {
      ctx.broadcast(bytes);
      ctx.send(id_, std::move(bytes));
    }
  }
  for (const auto& t : out.timers) {
    const auto kind = t.kind == TimerRequest::Kind::kViewTimeout ? kViewTimer : kHeartbeatTimer;
    ctx.set_timer(t.at, timer_tag(kind, t.view));
  }
  metrics_.consensus_warnings += out.warnings.size();
  const RoundId before = state_.r_round_id;
  for (const auto& tx : out.committed) execute_committed(ctx, tx);
  if (!out.committed.empty()) retry_stale_upds(ctx);
  if (state_.r_round_id != before) try_start_round(ctx);
}

void DeflNode::execute_committed(Context& ctx, const Transaction& tx) {
  const RoundId before = state_.r_round_id;
  const Response resp = execute(state_, tx, params_.f);
  ++metrics_.responses[static_cast<std::size_t>(resp)];

  if (tx.kind == TxKind::kUpd && resp == Response::kOk && tx.sender != id_ && !pool_.contains(*tx.payload)) {
    fetch(ctx, *tx.payload, tx.sender, tx.target_round);
  }
  if (tx.sender == id_) {
    const Digest tid = tx_id(tx);
    if (auto it = own_index_.find(tid); it != own_index_.end()) metrics_.own_transactions[it->second].committed = ctx.now();
    if (auto it = pending_upd_.find(tid); it != pending_upd_.end()) {
      const RoundId planned = it->second;
      pending_upd_.erase(it);
      if (client_.on_upd_response(resp, planned)) {
        if (agg_submitted_.count(planned)) client_.on_agg_sent();
        submit_due(ctx);
      } else {
        std::erase_if(scheduled_, [&](const ScheduledTx& s) { return s.tx.target_round == planned && s.after_upd_ok; });
      }
      if (client_.phase() == ClientState::Phase::kIdle) try_start_round(ctx);
    }
  }
  if (state_.r_round_id != before) {
    metrics_.state_digests[state_.r_round_id] = state_.state_digest();
    pool_.gc_rounds(state_.r_round_id + 1, params_.tau);
    const RoundId horizon = state_.r_round_id + 1;
    std::erase_if(fetching_, [&](const auto& kv) {
      return horizon >= static_cast<RoundId>(params_.tau) && kv.second <= horizon - params_.tau;
    });
  }
}

void DeflNode::fetch(Context& ctx, const Digest& dg, NodeId owner, RoundId round) {
  fetching_[dg] = round;
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(MessageKind::kFetchRequest));
  w.digest(dg);
  ++metrics_.fetches_sent;
  ctx.send(owner, std::move(w).bytes());
}

void DeflNode::submit(Context& ctx, const Transaction& tx) {
  const Digest tid = tx_id(tx);
  if (!own_index_.count(tid)) {
    own_index_[tid] = metrics_.own_transactions.size();
    metrics_.own_transactions.push_back({tx, ctx.now(), std::nullopt});
  }
  ctx.broadcast(encode_tx_message(tx));
  apply(ctx, consensus_.on_transaction(tx, ctx.now()));
}

void DeflNode::retry_stale_upds(Context& ctx) {
  for (const auto& [tid, round] : pending_upd_) {
    if (retried_.count(tid)) continue;
    const auto& timing = metrics_.own_transactions[own_index_.at(tid)];
    if (timing.committed || ctx.now() - timing.submitted < params_.gst_lt) continue;
    retried_.insert(tid);
    ++metrics_.upd_retries;
    ctx.broadcast(encode_tx_message(timing.tx));
  }
}

void DeflNode::submit_due(Context& ctx) {
  for (std::size_t i = 0; i < scheduled_.size();) {
    const ScheduledTx s = scheduled_[i];
    if (s.at > ctx.now()) {
      ++i;
      continue;
    }
    if (s.after_upd_ok) {
      const bool released = client_.phase() == ClientState::Phase::kWaitingAgg &&
                            client_.in_flight_round() == s.tx.target_round;
      const bool waiting = client_.phase() == ClientState::Phase::kAwaitingUpd &&
                           client_.in_flight_round() == s.tx.target_round;
      if (!released) {
        if (waiting) {
          ++i;
        } else {
          scheduled_.erase(scheduled_.begin() + static_cast<std::ptrdiff_t>(i));
        }
        continue;
      }
    }
    scheduled_.erase(scheduled_.begin() + static_cast<std::ptrdiff_t>(i));
    if (s.tx.kind == TxKind::kAgg) agg_submitted_.insert(s.tx.target_round);
    submit(ctx, s.tx);
    if (s.tx.kind == TxKind::kAgg && client_.phase() == ClientState::Phase::kWaitingAgg &&
        client_.in_flight_round() == s.tx.target_round) {
      client_.on_agg_sent();
      try_start_round(ctx);
    }
    // submit() may have re-entered and changed the queue.
    i = 0;
  }
}

void DeflNode::try_start_round(Context& ctx) {
  if (finished_ || training_ || client_.phase() != ClientState::Phase::kIdle) return;
  if (client_.l_round_id() > state_.r_round_id) return;

  LastSnapshot last = snapshot_last(state_, pool_);
  if (!last.missing.empty()) {
    if (!gate_deadline_) {
      gate_deadline_ = ctx.now() + params_.fetch_wait;
      ctx.set_timer(*gate_deadline_, timer_tag(kGateTimer, state_.r_round_id));
    }
    if (ctx.now() < *gate_deadline_) {
      for (const auto& [owner, dg] : last.missing) {
        if (!fetching_.count(dg)) fetch(ctx, dg, owner, state_.r_round_id);
      }
      return;
    }
  }
  gate_deadline_.reset();

  auto plan = client_.maybe_start_round(state_.r_round_id, last, ctx.now());
  if (!plan) return;
  if (observer_) observer_(id_, state_.r_round_id, last, *plan);
  if (plan->target_round > params_.max_round) {
    finished_ = true;
    return;
  }
  const auto span = static_cast<std::uint64_t>(std::max<SimTime>(0, params_.train_max - params_.train_min) + 1);
  const SimTime duration = params_.train_min + static_cast<SimTime>(mix_seed(seed_, schedule_counter_++) % span);
  training_ = std::move(plan);
  ctx.set_timer(ctx.now() + duration, timer_tag(kTrainTimer, training_->target_round));
}

void DeflNode::finish_training(Context& ctx) {
  RoundPlan plan = std::move(*training_);
  training_.reset();
  WeightVector trained =
      local_train(setup_->task.task, plan.w_agg, shard_, params_.train, step_counter_, train_rng_);
  if (byzantine() && attack_.poisons_weights()) trained = poison_weights(attack_, plan.w_agg, trained, attack_rng_);
  pool_.put(trained, plan.target_round);

  auto txs = client_.finish_round(plan, trained, ctx.now());
  if (byzantine() && attack_.protocol_level()) {
    txs = misbehave_protocol(attack_, std::move(txs), plan.start_time, plan.target_round, attack_rng_);
  }
  for (const auto& s : txs) {
    if (s.tx.kind == TxKind::kUpd) pending_upd_[tx_id(s.tx)] = plan.target_round;
    if (s.at > ctx.now()) ctx.set_timer(s.at, timer_tag(kSubmitTimer, s.tx.target_round));
    scheduled_.push_back(s);
  }
  submit_due(ctx);
}

void DeflNode::on_timer(Context& ctx, std::uint64_t tag) {
  const std::uint64_t kind = tag >> kKindShift;
  const std::uint64_t payload = tag & kPayloadMask;
  switch (kind) {
    case kViewTimer:
      apply(ctx, consensus_.on_timeout(payload, ctx.now()));
      break;
    case kHeartbeatTimer:
      apply(ctx, consensus_.on_heartbeat(payload, ctx.now()));
      break;
    case kTrainTimer:
      if (training_ && training_->target_round == payload) finish_training(ctx);
      break;
    case kSubmitTimer:
      submit_due(ctx);
      break;
    case kGateTimer:
      if (gate_deadline_ && state_.r_round_id == payload) try_start_round(ctx);
      break;
    default:
      break;
  }
}

void DeflNode::on_message(Context& ctx, NodeId from, const Bytes& payload) {
  if (payload.empty()) return;
  const auto kind = static_cast<MessageKind>(payload[0]);
  switch (kind) {
    case MessageKind::kTransaction: {
      ByteReader r(std::span<const std::uint8_t>(payload).subspan(1));
      const Transaction tx = decode_transaction(r);
      apply(ctx, consensus_.on_transaction(tx, ctx.now()));
      break;
    }
    case MessageKind::kFetchRequest: {
      ByteReader r(std::span<const std::uint8_t>(payload).subspan(1));
      const Digest dg = r.digest();
      const WeightVector* w = pool_.find(dg);
      if (!w) break;
      ByteWriter out;
      out.u8(static_cast<std::uint8_t>(MessageKind::kFetchResponse));
      out.digest(dg);
      const Bytes body = canonical_serialize(*w);
      out.u32(static_cast<std::uint32_t>(body.size()));
      out.raw(body);
      ctx.send(from, std::move(out).bytes());
      break;
    }
    case MessageKind::kFetchResponse: {
      ByteReader r(std::span<const std::uint8_t>(payload).subspan(1));
      const Digest dg = r.digest();
      const auto size = r.u32();
      const WeightVector w = canonical_deserialize(r.raw(size));
      auto it = fetching_.find(dg);
      if (it == fetching_.end()) {
        ++metrics_.stale_fetch_responses;
        break;
      }
      const RoundId round = it->second;
      fetching_.erase(it);
      if (!pool_.put_verified(dg, w, round)) {
        ++metrics_.fetches_rejected;
        break;
      }
      try_start_round(ctx);
      break;
    }
    default:
      apply(ctx, consensus_.on_message(from, decode_consensus(payload), ctx.now()));
      break;
  }
}

}  // namespace defl
