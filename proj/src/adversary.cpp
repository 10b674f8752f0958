#include "defl/adversary.hpp"

namespace defl {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone:
      return "none";
    case AttackKind::kGaussian:
      return "gaussian";
    case AttackKind::kSignFlip:
      return "sign_flip";
    case AttackKind::kLabelFlip:
      return "label_flip";
    case AttackKind::kWrongRoundUpd:
      return "wrong_round_upd";
    case AttackKind::kEarlyAgg:
      return "early_agg";
    case AttackKind::kCrash:
      return "crash";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& name) {
  for (auto kind : {AttackKind::kNone, AttackKind::kGaussian, AttackKind::kSignFlip, AttackKind::kLabelFlip,
                    AttackKind::kWrongRoundUpd, AttackKind::kEarlyAgg, AttackKind::kCrash}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown attack kind '" + name + "'");
}

std::string to_string(ConsensusFault fault) {
  switch (fault) {
    case ConsensusFault::kNone:
      return "none";
    case ConsensusFault::kCrash:
      return "crash";
    case ConsensusFault::kEquivocate:
      return "equivocate";
  }
  return "?";
}

ConsensusFault parse_consensus_fault(const std::string& name) {
  for (auto fault : {ConsensusFault::kNone, ConsensusFault::kCrash, ConsensusFault::kEquivocate}) {
    if (to_string(fault) == name) return fault;
  }
  throw ConfigError("unknown consensus fault '" + name + "'");
}

WeightVector poison_weights(const AttackSpec& spec, const WeightVector& w_agg, const WeightVector& w_trained,
                            std::mt19937_64& rng) {
  if (w_agg.size() != w_trained.size()) throw DimensionError("poison_weights: dimension mismatch");
  switch (spec.kind) {
    case AttackKind::kGaussian: {
      if (spec.factor < 0) throw ContractError("gaussian attack needs a non-negative standard deviation");
      std::normal_distribution<double> noise(0.0, 1.0);
      WeightVector eps = WeightVector::NullaryExpr(w_trained.size(), [&](Eigen::Index) { return noise(rng); });
      return spec.gaussian_replace ? WeightVector(spec.factor * eps) : WeightVector(w_trained + spec.factor * eps);
    }
    case AttackKind::kSignFlip:
      if (!(spec.factor < 0)) throw ContractError("sign-flip attack needs a negative scale");
      return w_agg + spec.factor * (w_trained - w_agg);
    default:
      throw ContractError("poison_weights called for attack kind " + to_string(spec.kind));
  }
}

DataShard flip_labels(const AttackSpec&, DataShard shard) {
  for (Eigen::Index i = 0; i < shard.data.labels.size(); ++i) {
    const double y = shard.data.labels[i];
    if (y != 0.0 && y != 1.0) throw ContractError("flip_labels expects binary labels");
    shard.data.labels[i] = 1.0 - y;
  }
  return shard;
}

std::vector<ScheduledTx> misbehave_protocol(const AttackSpec& spec, std::vector<ScheduledTx> planned,
                                            SimTime round_start, RoundId round, std::mt19937_64& rng) {
  switch (spec.kind) {
    case AttackKind::kWrongRoundUpd:
      for (auto& s : planned) {
        if (s.tx.kind != TxKind::kUpd) continue;
        const bool up = std::bernoulli_distribution(0.5)(rng);
        s.tx.target_round = up || s.tx.target_round == 0 ? s.tx.target_round + 1 : s.tx.target_round - 1;
      }
      return planned;
    case AttackKind::kEarlyAgg:
      for (auto& s : planned) {
        if (s.tx.kind != TxKind::kAgg) continue;
        s.at = round_start;
        s.after_upd_ok = false;
      }
      return planned;
    case AttackKind::kCrash:
      if (round >= spec.crash_round) return {};
      return planned;
    default:
      return planned;
  }
}

}  // namespace defl
