#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "defl/adversary.hpp"
#include "defl/core.hpp"

namespace defl {

using ViewNumber = std::uint64_t;

/// Round-robin leader of a view.
inline NodeId leader_of(ViewNumber view, int n) { return static_cast<NodeId>(view % static_cast<ViewNumber>(n)); }

enum class Phase : std::uint8_t { kPrepare = 1, kPreCommit = 2, kCommit = 3 };

std::string to_string(Phase phase);

/// Produces and checks per-node attestations over vote bytes.
class Signer {
 public:
  virtual ~Signer() = default;
  virtual Digest sign(NodeId signer, std::span<const std::uint8_t> message) const = 0;
  virtual bool verify(NodeId signer, std::span<const std::uint8_t> message, const Digest& token) const = 0;
};

/// HMAC-SHA256 with a per-node key derived from a run secret. The verifier
/// knows every key, so this stands in for real signatures in simulation.
class KeyedHashSigner final : public Signer {
 public:
  KeyedHashSigner(int n, std::uint64_t secret);

  Digest sign(NodeId signer, std::span<const std::uint8_t> message) const override;
  bool verify(NodeId signer, std::span<const std::uint8_t> message, const Digest& token) const override;

 private:
  std::vector<Digest> keys_;
};

/// Proof that n - f replicas voted for `node` in `phase` of `view`.
struct QuorumCert {
  ViewNumber view = 0;
  Phase phase = Phase::kPrepare;
  Digest node;
  std::vector<std::pair<NodeId, Digest>> signatures;  // sorted by signer

  bool is_genesis() const { return view == 0 && signatures.empty(); }
  bool operator==(const QuorumCert&) const = default;
};

struct Proposal {
  ViewNumber view = 0;
  std::uint64_t height = 0;
  Digest parent;
  std::vector<Transaction> batch;
  QuorumCert justify;

  /// Hash over (view, height, parent, batch); the justify QC is excluded.
  Digest hash() const;
  bool operator==(const Proposal&) const = default;
};

struct Vote {
  NodeId voter = 0;
  ViewNumber view = 0;
  Phase phase = Phase::kPrepare;
  Digest node;
  Digest attestation;

  bool operator==(const Vote&) const = default;
};

Bytes vote_message(Phase phase, ViewNumber view, const Digest& node);

struct NewViewMsg {
  ViewNumber view = 0;
  QuorumCert high_qc;
  bool operator==(const NewViewMsg&) const = default;
};

/// PRE-COMMIT, COMMIT or DECIDE broadcast by the leader, carrying the QC of
/// the previous phase.
struct PhaseMsg {
  MessageKind kind = MessageKind::kPreCommit;
  ViewNumber view = 0;
  QuorumCert qc;
  bool operator==(const PhaseMsg&) const = default;
};

struct SyncRequest {
  Digest node;
  bool operator==(const SyncRequest&) const = default;
};

struct SyncResponse {
  Proposal proposal;
  bool operator==(const SyncResponse&) const = default;
};

using ConsensusMessage = std::variant<NewViewMsg, Proposal, Vote, PhaseMsg, SyncRequest, SyncResponse>;

MessageKind kind_of(const ConsensusMessage& msg);
Bytes encode(const ConsensusMessage& msg);
ConsensusMessage decode_consensus(std::span<const std::uint8_t> bytes);

struct Outbound {
  // Unset: broadcast to every node, including the sender itself.
  std::optional<NodeId> to;
  ConsensusMessage msg;
};

struct TimerRequest {
  enum class Kind : std::uint8_t { kViewTimeout, kHeartbeat };
  Kind kind = Kind::kViewTimeout;
  ViewNumber view = 0;
  SimTime at = 0;
};

struct CommittedBlock {
  std::uint64_t height = 0;
  Digest hash;
  std::vector<Transaction> batch;
};

struct ConsensusOutput {
  std::vector<Outbound> messages;
  std::vector<TimerRequest> timers;
  // Newly committed transactions in log order, duplicates removed.
  std::vector<Transaction> committed;
  std::vector<std::string> warnings;

  void append(ConsensusOutput&& other);
};

struct ConsensusConfig {
  int n = 4;
  int f = 1;
  SimTime view_timeout = 300;
  // An idle leader proposes an empty block after this long.
  SimTime heartbeat = 100;
  int max_batch = 64;

  int quorum() const { return n - f; }
};

/// View timer with exponential backoff on consecutive failed views.
struct Pacemaker {
  SimTime base_timeout = 300;
  int consecutive_failures = 0;

  SimTime timeout() const { return base_timeout << std::min(consecutive_failures, 16); }
  void on_commit() { consecutive_failures = 0; }
  void on_failure() { ++consecutive_failures; }
};

struct ConsensusStats {
  std::uint64_t timeouts = 0;
  std::uint64_t rejected_attestations = 0;
  std::uint64_t ignored_proposals = 0;
  std::uint64_t withheld_votes = 0;
  std::uint64_t duplicate_votes = 0;
  std::uint64_t qcs_formed = 0;
  // Consensus messages sent, keyed by the view they belong to. A broadcast to
  // n nodes counts n - 1 (the loopback copy is free).
  std::map<ViewNumber, std::uint64_t> sent_by_view;
  // Commit decisions keyed by view.
  std::set<ViewNumber> committed_views;
};

/// Basic (non-chained) HotStuff replica: PREPARE, PRE-COMMIT, COMMIT and
/// DECIDE per view, a rotating leader, and n - f quorum certificates. Each
/// handler maps one input event to the messages, timers and commits it
/// causes; no other state is shared between replicas.
class HotStuffReplica {
 public:
  HotStuffReplica(ConsensusConfig config, NodeId self, std::shared_ptr<const Signer> signer,
                  ConsensusFault fault = ConsensusFault::kNone);

  ConsensusOutput start(SimTime now);

  ConsensusOutput on_message(NodeId from, const ConsensusMessage& msg, SimTime now);
  ConsensusOutput on_propose(NodeId from, const Proposal& proposal, SimTime now);
  ConsensusOutput on_vote(const Vote& vote, SimTime now);
  ConsensusOutput on_phase(NodeId from, const PhaseMsg& msg, SimTime now);
  ConsensusOutput on_decide(const QuorumCert& commit_qc, SimTime now);
  ConsensusOutput on_new_view(NodeId from, const NewViewMsg& msg, SimTime now);
  ConsensusOutput on_timeout(ViewNumber view, SimTime now);
  ConsensusOutput on_heartbeat(ViewNumber view, SimTime now);
  /// Queues a client transaction; a leader waiting for work proposes at once.
  ConsensusOutput on_transaction(const Transaction& tx, SimTime now);

  bool verify_qc(const QuorumCert& qc) const;

  NodeId self() const { return self_; }
  ViewNumber current_view() const { return view_; }
  const QuorumCert& locked_qc() const { return locked_qc_; }
  const QuorumCert& prepare_qc() const { return prepare_qc_; }
  const std::vector<CommittedBlock>& log() const { return log_; }
  std::uint64_t committed_height() const { return committed_height_; }
  std::size_t pending_transactions() const { return pending_.size(); }
  bool is_committed(const Transaction& tx) const { return committed_ids_.count(tx_id(tx)) != 0; }
  const ConsensusStats& stats() const { return stats_; }
  const Pacemaker& pacemaker() const { return pacemaker_; }
  /// Set when a decided block does not extend this replica's committed chain.
  const std::optional<std::string>& safety_violation() const { return safety_violation_; }

 private:
  struct LeaderView {
    std::map<NodeId, QuorumCert> new_views;
    bool proposed = false;
    std::map<std::tuple<Phase, Digest>, std::map<NodeId, Digest>> votes;
    std::set<std::tuple<Phase, Digest>> formed;
  };

  bool is_leader(ViewNumber view) const { return leader_of(view, config_.n) == self_; }
  void enter_view(ViewNumber view, SimTime now, ConsensusOutput& out);
  void wish(ViewNumber view, ConsensusOutput& out);
  void follow(ViewNumber view, SimTime now, ConsensusOutput& out);
  void sync_views(SimTime now, ConsensusOutput& out);
  void send(ConsensusOutput& out, std::optional<NodeId> to, ConsensusMessage msg, ViewNumber view);
  void vote(ConsensusOutput& out, ViewNumber view, Phase phase, const Digest& node);
  void try_propose(ViewNumber view, SimTime now, bool allow_empty, ConsensusOutput& out);
  std::vector<Transaction> select_batch(const Digest& parent) const;
  bool extends(const Digest& descendant, const Digest& ancestor) const;
  bool safe_node(const Proposal& p) const;
  void request_block(const Digest& node, NodeId from, ConsensusOutput& out);
  void commit_through(const Digest& node, ConsensusOutput& out);
  void retry_waiting(SimTime now, ConsensusOutput& out);
  void store_block(const Proposal& p);
  void prune(ViewNumber below);

  ConsensusConfig config_;
  NodeId self_;
  std::shared_ptr<const Signer> signer_;
  ConsensusFault fault_;

  ViewNumber view_ = 0;
  Pacemaker pacemaker_;
  QuorumCert prepare_qc_;
  QuorumCert locked_qc_;
  std::set<std::pair<ViewNumber, Phase>> voted_;

  std::unordered_map<Digest, Proposal, DigestHash> blocks_;
  std::map<ViewNumber, LeaderView> leading_;
  // (view, phase, node, digest of the signature list)
  mutable std::set<std::tuple<ViewNumber, Phase, Digest, Digest>> verified_;

  Digest committed_hash_;
  std::uint64_t committed_height_ = 0;
  std::vector<CommittedBlock> log_;
  std::unordered_set<Digest, DigestHash> committed_ids_;

  std::vector<Transaction> pending_;
  std::unordered_set<Digest, DigestHash> pending_ids_;

  // Work blocked on blocks this replica has not seen yet.
  std::vector<std::pair<NodeId, Proposal>> waiting_proposals_;
  std::vector<QuorumCert> waiting_decides_;
  std::set<Digest> requested_;
  // Highest view each peer asked for in a NEW-VIEW, and this replica's own
  // request after a timeout. A view is entered once n - f replicas ask for it.
  std::map<NodeId, ViewNumber> announced_;
  ViewNumber wished_ = 0;

  ConsensusStats stats_;
  std::optional<std::string> safety_violation_;
};

}  // namespace defl
