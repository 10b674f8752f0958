#pragma once

#include <random>
#include <set>
#include <string>
#include <vector>

#include "defl/client.hpp"
#include "defl/core.hpp"
#include "defl/tasks.hpp"

namespace defl {

enum class AttackKind { kNone, kGaussian, kSignFlip, kLabelFlip, kWrongRoundUpd, kEarlyAgg, kCrash };

/// Consensus-layer behaviour of a victim. By default victims vote honestly.
enum class ConsensusFault { kNone, kCrash, kEquivocate };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);
std::string to_string(ConsensusFault fault);
ConsensusFault parse_consensus_fault(const std::string& name);

struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  // Gaussian standard deviation, or the sign-flip scale (negative).
  double factor = 0.0;
  std::set<NodeId> victims;
  // First round from which a crashed victim stops emitting transactions.
  RoundId crash_round = 0;
  ConsensusFault consensus = ConsensusFault::kNone;
  // Gaussian variant that replaces the trained weights with pure noise.
  bool gaussian_replace = false;

  bool is_victim(NodeId id) const { return victims.count(id) != 0; }
  bool poisons_weights() const { return kind == AttackKind::kGaussian || kind == AttackKind::kSignFlip; }
  bool protocol_level() const {
    return kind == AttackKind::kWrongRoundUpd || kind == AttackKind::kEarlyAgg || kind == AttackKind::kCrash ||
           consensus != ConsensusFault::kNone;
  }
  /// Byzantine rate |victims| / n.
  double beta(int n) const { return n > 0 ? static_cast<double>(victims.size()) / n : 0.0; }
};

/// GAUSSIAN: w_trained + N(0, factor^2 I).
/// SIGN_FLIP: w_agg + factor * (w_trained - w_agg), i.e. the local update scaled by a negative factor.
WeightVector poison_weights(const AttackSpec& spec, const WeightVector& w_agg, const WeightVector& w_trained,
                            std::mt19937_64& rng);

/// Replaces every 0/1 label y by 1 - y. Features are untouched.
DataShard flip_labels(const AttackSpec& spec, DataShard shard);

/// Rewrites the transactions an honest client planned for `round`:
///   WRONG_ROUND_UPD  UPD target moved by +1 or -1 (drawn from rng)
///   EARLY_AGG        AGG due at round_start and no longer gated on the UPD
///   CRASH            nothing from crash_round onwards
std::vector<ScheduledTx> misbehave_protocol(const AttackSpec& spec, std::vector<ScheduledTx> planned,
                                            SimTime round_start, RoundId round, std::mt19937_64& rng);

}  // namespace defl
