#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "defl/core.hpp"
#include "defl/storage_pool.hpp"

namespace defl {

/// Replica responses. Names follow the protocol's log vocabulary.
enum class Response { kOk, kAlreadyUPDError, kNotMeetQuorumWarning, kAlreadyAGGError };

std::string to_string(Response r);

/// Round and weight-slot state replicated by executing committed transactions.
struct ReplicaState {
  RoundId r_round_id = 0;
  std::set<NodeId> agg_voters;
  std::vector<std::optional<Digest>> w_cur;
  std::vector<std::optional<Digest>> w_last;

  ReplicaState() = default;
  explicit ReplicaState(int n) : w_cur(static_cast<std::size_t>(n)), w_last(static_cast<std::size_t>(n)) {}

  int n() const { return static_cast<int>(w_cur.size()); }
  /// Hash of a canonical encoding; equal states have equal digests.
  Digest state_digest() const;

  bool operator==(const ReplicaState&) const = default;
};

/// Writes W_CUR[sender] when the update targets r_round_id + 1.
Response exec_upd(ReplicaState& state, const Transaction& tx);

/// Counts distinct AGG senders for round r_round_id + 1; at quorum (f + 1)
/// advances the round and rotates W_CUR into W_LAST.
Response exec_agg(ReplicaState& state, const Transaction& tx, int f);

Response execute(ReplicaState& state, const Transaction& tx, int f);

struct LastSnapshot {
  std::vector<std::optional<WeightVector>> slots;
  // Digests present in W_LAST whose bytes are not in the pool yet.
  std::vector<std::pair<NodeId, Digest>> missing;

  int available() const;
};

/// Resolves W_LAST through the pool. Unresolvable digests leave the slot
/// empty and are reported in `missing` so the caller can fetch them.
LastSnapshot snapshot_last(const ReplicaState& state, const StoragePool& pool);

}  // namespace defl
