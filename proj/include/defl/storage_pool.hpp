#pragma once

#include <cstdint>
#include <map>

#include "defl/core.hpp"

namespace defl {

struct PoolEntry {
  Digest digest;
  WeightVector weights;
  RoundId round_tag = 0;
  int ref_count = 0;
};

struct PoolStats {
  std::uint64_t current_bytes = 0;
  std::uint64_t peak_bytes = 0;
  std::size_t entries = 0;
};

/// Content-addressed weight store owned by one node. Consensus moves digests;
/// this moves bytes. Entries are immutable after insertion and evicted by
/// round only.
class StoragePool {
 public:
  /// Per-entry bookkeeping charged on top of the 8*d payload bytes:
  /// digest (32) + round tag (8) + reference count (8).
  static constexpr std::uint64_t kEntryMetadataBytes = 48;

  /// Idempotent on identical content. A repeated put keeps the first round tag.
  Digest put(const WeightVector& w, RoundId round);
  /// Inserts bytes fetched from a peer after re-digesting them. Returns false
  /// (and stores nothing) when the content does not hash to `expected`.
  bool put_verified(const Digest& expected, const WeightVector& w, RoundId round);

  /// Throws NotFound for unknown or evicted digests.
  const WeightVector& get(const Digest& dg) const;
  const WeightVector* find(const Digest& dg) const;
  bool contains(const Digest& dg) const { return entries_.count(dg) != 0; }

  void retain(const Digest& dg);
  void release(const Digest& dg);

  /// Drops every entry with round_tag <= current_round - tau.
  std::size_t gc_rounds(RoundId current_round, int tau);

  const PoolStats& stats() const { return stats_; }
  static std::uint64_t entry_bytes(const WeightVector& w);

 private:
  void insert(const Digest& dg, const WeightVector& w, RoundId round);

  std::map<Digest, PoolEntry> entries_;
  PoolStats stats_;
};

}  // namespace defl
