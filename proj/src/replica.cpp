#include "defl/replica.hpp"

#include <algorithm>

namespace defl {

std::string to_string(Response r) {
  switch (r) {
    case Response::kOk:
      return "OK";
    case Response::kAlreadyUPDError:
      return "AlreadyUPDError";
    case Response::kNotMeetQuorumWarning:
      return "NotMeetQuorumWarning";
    case Response::kAlreadyAGGError:
      return "AlreadyAGGError";
  }
  return "?";
}

Digest ReplicaState::state_digest() const {
  ByteWriter w;
  w.u64(r_round_id);
  w.u32(static_cast<std::uint32_t>(agg_voters.size()));
  for (auto v : agg_voters) w.u32(v);
  w.u32(static_cast<std::uint32_t>(w_cur.size()));
  for (const auto* slots : {&w_cur, &w_last}) {
    for (const auto& slot : *slots) {
      w.u8(slot ? 1 : 0);
      if (slot) w.digest(*slot);
    }
  }
  return sha256(w.bytes());
}

Response exec_upd(ReplicaState& state, const Transaction& tx) {
  if (tx.kind != TxKind::kUpd || !tx.payload) throw ContractError("exec_upd expects an UPD transaction");
  if (tx.sender >= static_cast<NodeId>(state.n())) throw ContractError("UPD sender outside [0, n)");
  if (tx.target_round != state.r_round_id + 1) return Response::kAlreadyUPDError;
  state.w_cur[tx.sender] = tx.payload;
  return Response::kOk;
}

Response exec_agg(ReplicaState& state, const Transaction& tx, int f) {
  if (tx.kind != TxKind::kAgg) throw ContractError("exec_agg expects an AGG transaction");
  if (tx.sender >= static_cast<NodeId>(state.n())) throw ContractError("AGG sender outside [0, n)");
  if (tx.target_round != state.r_round_id + 1) return Response::kAlreadyAGGError;
  state.agg_voters.insert(tx.sender);
  if (static_cast<int>(state.agg_voters.size()) < f + 1) return Response::kNotMeetQuorumWarning;
  state.r_round_id = tx.target_round;
  state.agg_voters.clear();
  state.w_last = std::move(state.w_cur);
  state.w_cur.assign(state.w_last.size(), std::nullopt);
  return Response::kOk;
}

Response execute(ReplicaState& state, const Transaction& tx, int f) {
  return tx.kind == TxKind::kUpd ? exec_upd(state, tx) : exec_agg(state, tx, f);
}

int LastSnapshot::available() const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); }));
}

LastSnapshot snapshot_last(const ReplicaState& state, const StoragePool& pool) {
  LastSnapshot snap;
  snap.slots.resize(state.w_last.size());
  for (std::size_t i = 0; i < state.w_last.size(); ++i) {
    const auto& dg = state.w_last[i];
    if (!dg) continue;
    if (const auto* w = pool.find(*dg)) {
      snap.slots[i] = *w;
    } else {
      snap.missing.emplace_back(static_cast<NodeId>(i), *dg);
    }
  }
  return snap;
}

}  // namespace defl
