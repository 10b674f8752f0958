#include "defl/storage_pool.hpp"

#include <algorithm>

namespace defl {

std::uint64_t StoragePool::entry_bytes(const WeightVector& w) {
  return 8 * static_cast<std::uint64_t>(w.size()) + kEntryMetadataBytes;
}

void StoragePool::insert(const Digest& dg, const WeightVector& w, RoundId round) {
  if (entries_.count(dg)) return;
  entries_.emplace(dg, PoolEntry{dg, w, round, 0});
  stats_.current_bytes += entry_bytes(w);
  stats_.peak_bytes = std::max(stats_.peak_bytes, stats_.current_bytes);
  stats_.entries = entries_.size();
}

Digest StoragePool::put(const WeightVector& w, RoundId round) {
  const Digest dg = digest(w);
  insert(dg, w, round);
  return dg;
}

bool StoragePool::put_verified(const Digest& expected, const WeightVector& w, RoundId round) {
  if (!w.allFinite() || digest(w) != expected) return false;
  insert(expected, w, round);
  return true;
}

const WeightVector& StoragePool::get(const Digest& dg) const {
  auto it = entries_.find(dg);
  if (it == entries_.end()) throw NotFound("no pool entry for digest " + dg.hex());
  return it->second.weights;
}

const WeightVector* StoragePool::find(const Digest& dg) const {
  auto it = entries_.find(dg);
  return it == entries_.end() ? nullptr : &it->second.weights;
}

void StoragePool::retain(const Digest& dg) {
  if (auto it = entries_.find(dg); it != entries_.end()) ++it->second.ref_count;
}

void StoragePool::release(const Digest& dg) {
  if (auto it = entries_.find(dg); it != entries_.end() && it->second.ref_count > 0) --it->second.ref_count;
}

std::size_t StoragePool::gc_rounds(RoundId current_round, int tau) {
  if (tau < 2) throw ParameterError("pool retention tau must be at least 2");
  if (current_round < static_cast<RoundId>(tau)) return 0;
  const RoundId cutoff = current_round - static_cast<RoundId>(tau);
  std::size_t evicted = 0;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->second.round_tag <= cutoff) {
      stats_.current_bytes -= entry_bytes(it->second.weights);
      it = entries_.erase(it);
      ++evicted;
    } else {
      ++it;
    }
  }
  stats_.entries = entries_.size();
  return evicted;
}

}  // namespace defl
