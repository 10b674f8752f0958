#include "defl/consensus.hpp"

#include <algorithm>
#include <tuple>

#include <openssl/evp.h>
#include <openssl/hmac.h>

namespace defl {

namespace {

const Digest kGenesis{};

void encode_qc(ByteWriter& w, const QuorumCert& qc) {
  w.u64(qc.view);
  w.u8(static_cast<std::uint8_t>(qc.phase));
  w.digest(qc.node);
  w.u32(static_cast<std::uint32_t>(qc.signatures.size()));
  for (const auto& [signer, token] : qc.signatures) {
    w.u32(signer);
    w.digest(token);
  }
}

Phase decode_phase(ByteReader& r) {
  auto p = r.u8();
  if (p < 1 || p > 3) throw SerializationError("unknown vote phase");
  return static_cast<Phase>(p);
}

QuorumCert decode_qc(ByteReader& r) {
  QuorumCert qc;
  qc.view = r.u64();
  qc.phase = decode_phase(r);
  qc.node = r.digest();
  auto count = r.u32();
  if (count > r.remaining() / 36) throw SerializationError("QC signer count exceeds payload");
  qc.signatures.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NodeId signer = r.u32();
    qc.signatures.emplace_back(signer, r.digest());
  }
  return qc;
}

void encode_body(ByteWriter& w, const Proposal& p, bool with_justify) {
  w.u64(p.view);
  w.u64(p.height);
  w.digest(p.parent);
  w.u32(static_cast<std::uint32_t>(p.batch.size()));
  for (const auto& tx : p.batch) encode(w, tx);
  if (with_justify) encode_qc(w, p.justify);
}

Proposal decode_proposal(ByteReader& r) {
  Proposal p;
  p.view = r.u64();
  p.height = r.u64();
  p.parent = r.digest();
  auto count = r.u32();
  if (count > r.remaining() / 13) throw SerializationError("batch size exceeds payload");
  p.batch.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) p.batch.push_back(decode_transaction(r));
  p.justify = decode_qc(r);
  return p;
}

MessageKind next_kind(Phase phase) {
  switch (phase) {
    case Phase::kPrepare:
      return MessageKind::kPreCommit;
    case Phase::kPreCommit:
      return MessageKind::kCommit;
    case Phase::kCommit:
      return MessageKind::kDecide;
  }
  return MessageKind::kDecide;
}

}  // namespace

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kPrepare:
      return "PREPARE";
    case Phase::kPreCommit:
      return "PRE-COMMIT";
    case Phase::kCommit:
      return "COMMIT";
  }
  return "?";
}

KeyedHashSigner::KeyedHashSigner(int n, std::uint64_t secret) {
  keys_.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ByteWriter w;
    w.u64(secret);
    w.u32(static_cast<std::uint32_t>(i));
    keys_.push_back(sha256(w.bytes()));
  }
}

Digest KeyedHashSigner::sign(NodeId signer, std::span<const std::uint8_t> message) const {
  if (signer >= keys_.size()) throw ParameterError("unknown signer");
  Digest out;
  unsigned int len = 0;
  const auto& key = keys_[signer].bytes;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), message.data(), message.size(), out.bytes.data(),
            &len)) {
    throw std::runtime_error("HMAC-SHA256 failed");
  }
  return out;
}

bool KeyedHashSigner::verify(NodeId signer, std::span<const std::uint8_t> message, const Digest& token) const {
  if (signer >= keys_.size()) return false;
  return sign(signer, message) == token;
}

Digest Proposal::hash() const {
  ByteWriter w;
  encode_body(w, *this, false);
  return sha256(w.bytes());
}

Bytes vote_message(Phase phase, ViewNumber view, const Digest& node) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(phase));
  w.u64(view);
  w.digest(node);
  return std::move(w).bytes();
}

MessageKind kind_of(const ConsensusMessage& msg) {
  return std::visit(
      [](const auto& m) -> MessageKind {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NewViewMsg>) return MessageKind::kNewView;
        if constexpr (std::is_same_v<T, Proposal>) return MessageKind::kPrepare;
        if constexpr (std::is_same_v<T, Vote>) return MessageKind::kVote;
        if constexpr (std::is_same_v<T, PhaseMsg>) return m.kind;
        if constexpr (std::is_same_v<T, SyncRequest>) return MessageKind::kSyncRequest;
        if constexpr (std::is_same_v<T, SyncResponse>) return MessageKind::kSyncResponse;
      },
      msg);
}

Bytes encode(const ConsensusMessage& msg) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind_of(msg)));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NewViewMsg>) {
          w.u64(m.view);
          encode_qc(w, m.high_qc);
        } else if constexpr (std::is_same_v<T, Proposal>) {
          encode_body(w, m, true);
        } else if constexpr (std::is_same_v<T, Vote>) {
          w.u32(m.voter);
          w.u64(m.view);
          w.u8(static_cast<std::uint8_t>(m.phase));
          w.digest(m.node);
          w.digest(m.attestation);
        } else if constexpr (std::is_same_v<T, PhaseMsg>) {
          w.u64(m.view);
          encode_qc(w, m.qc);
        } else if constexpr (std::is_same_v<T, SyncRequest>) {
          w.digest(m.node);
        } else if constexpr (std::is_same_v<T, SyncResponse>) {
          encode_body(w, m.proposal, true);
        }
      },
      msg);
  return std::move(w).bytes();
}

ConsensusMessage decode_consensus(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto kind = static_cast<MessageKind>(r.u8());
  ConsensusMessage out;
  switch (kind) {
    case MessageKind::kNewView: {
      NewViewMsg m;
      m.view = r.u64();
      m.high_qc = decode_qc(r);
      out = m;
      break;
    }
    case MessageKind::kPrepare:
      out = decode_proposal(r);
      break;
    case MessageKind::kVote: {
      Vote v;
      v.voter = r.u32();
      v.view = r.u64();
      v.phase = decode_phase(r);
      v.node = r.digest();
      v.attestation = r.digest();
      out = v;
      break;
    }
    case MessageKind::kPreCommit:
    case MessageKind::kCommit:
    case MessageKind::kDecide: {
      PhaseMsg m;
      m.kind = kind;
      m.view = r.u64();
      m.qc = decode_qc(r);
      out = m;
      break;
    }
    case MessageKind::kSyncRequest:
      out = SyncRequest{r.digest()};
      break;
    case MessageKind::kSyncResponse:
      out = SyncResponse{decode_proposal(r)};
      break;
    default:
      throw SerializationError("not a consensus message");
  }
  if (!r.done()) throw SerializationError("trailing bytes after consensus message");
  return out;
}

void ConsensusOutput::append(ConsensusOutput&& other) {
  for (auto& m : other.messages) messages.push_back(std::move(m));
  for (auto& t : other.timers) timers.push_back(t);
  for (auto& c : other.committed) committed.push_back(std::move(c));
  for (auto& w : other.warnings) warnings.push_back(std::move(w));
}

HotStuffReplica::HotStuffReplica(ConsensusConfig config, NodeId self, std::shared_ptr<const Signer> signer,
                                 ConsensusFault fault)
    : config_(config), self_(self), signer_(std::move(signer)), fault_(fault) {
  if (config_.n < 1 || config_.f < 0 || config_.quorum() < 1) throw ConfigError("invalid consensus membership");
  if (config_.view_timeout <= 0 || config_.heartbeat <= 0) throw ConfigError("consensus timers must be positive");
  pacemaker_.base_timeout = config_.view_timeout;
  Proposal genesis;
  blocks_.emplace(kGenesis, genesis);
  committed_hash_ = kGenesis;
}

ConsensusOutput HotStuffReplica::start(SimTime now) {
  ConsensusOutput out;
  enter_view(1, now, out);
  return out;
}

void HotStuffReplica::send(ConsensusOutput& out, std::optional<NodeId> to, ConsensusMessage msg, ViewNumber view) {
  std::uint64_t count = to ? (*to == self_ ? 0 : 1) : static_cast<std::uint64_t>(config_.n - 1);
  stats_.sent_by_view[view] += count;
  out.messages.push_back({to, std::move(msg)});
}

void HotStuffReplica::follow(ViewNumber view, SimTime now, ConsensusOutput& out) {
  view_ = view;
  requested_.clear();
  prune(view);
  out.timers.push_back({TimerRequest::Kind::kViewTimeout, view, now + pacemaker_.timeout()});
  if (is_leader(view)) out.timers.push_back({TimerRequest::Kind::kHeartbeat, view, now + config_.heartbeat});
}

void HotStuffReplica::enter_view(ViewNumber view, SimTime now, ConsensusOutput& out) {
  follow(view, now, out);
  if (wished_ != view) send(out, leader_of(view, config_.n), NewViewMsg{view, prepare_qc_}, view);
}

void HotStuffReplica::wish(ViewNumber view, ConsensusOutput& out) {
  wished_ = view;
  send(out, std::nullopt, NewViewMsg{view, prepare_qc_}, view);
}

void HotStuffReplica::sync_views(SimTime now, ConsensusOutput& out) {
  std::vector<ViewNumber> others;
  for (const auto& [peer, v] : announced_) {
    if (peer != self_ && v > view_) others.push_back(v);
  }
  std::sort(others.begin(), others.end(), std::greater<>());
  // f + 1 requests include an honest one: join it.
  const auto f = static_cast<std::size_t>(config_.f);
  if (others.size() > f && others[f] > std::max(wished_, view_)) wish(others[f], out);

  std::vector<ViewNumber> all = others;
  if (wished_ > view_) all.push_back(wished_);
  std::sort(all.begin(), all.end(), std::greater<>());
  const auto q = static_cast<std::size_t>(config_.quorum());
  if (all.size() >= q && all[q - 1] > view_) enter_view(all[q - 1], now, out);
}

void HotStuffReplica::prune(ViewNumber below) {
  leading_.erase(leading_.begin(), leading_.lower_bound(below));
  voted_.erase(voted_.begin(), voted_.lower_bound({below, Phase::kPrepare}));
  if (below > 8) {
    for (auto it = verified_.begin(); it != verified_.end() && std::get<0>(*it) + 8 < below;) {
      it = verified_.erase(it);
    }
  }
}

namespace {

Digest signature_digest(const QuorumCert& qc) {
  Bytes bytes;
  for (const auto& [signer, token] : qc.signatures) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(signer >> (8 * i)));
    bytes.insert(bytes.end(), token.bytes.begin(), token.bytes.end());
  }
  return sha256(bytes);
}

}  // namespace

bool HotStuffReplica::verify_qc(const QuorumCert& qc) const {
  if (qc.is_genesis()) return qc.node == kGenesis && qc.phase == Phase::kPrepare;
  const auto key = std::make_tuple(qc.view, qc.phase, qc.node, signature_digest(qc));
  if (verified_.count(key)) return true;
  if (static_cast<int>(qc.signatures.size()) < config_.quorum()) return false;
  const Bytes message = vote_message(qc.phase, qc.view, qc.node);
  for (std::size_t i = 0; i < qc.signatures.size(); ++i) {
    const auto& [signer, token] = qc.signatures[i];
    if (signer >= static_cast<NodeId>(config_.n)) return false;
    if (i > 0 && qc.signatures[i - 1].first >= signer) return false;
    if (!signer_->verify(signer, message, token)) return false;
  }
  verified_.insert(key);
  return true;
}

void HotStuffReplica::store_block(const Proposal& p) { blocks_.emplace(p.hash(), p); }

bool HotStuffReplica::extends(const Digest& descendant, const Digest& ancestor) const {
  if (ancestor == kGenesis) return true;
  auto anc = blocks_.find(ancestor);
  if (anc == blocks_.end()) return false;
  Digest h = descendant;
  while (true) {
    if (h == ancestor) return true;
    auto it = blocks_.find(h);
    if (it == blocks_.end() || it->second.height <= anc->second.height || h == kGenesis) return false;
    h = it->second.parent;
  }
}

bool HotStuffReplica::safe_node(const Proposal& p) const {
  return extends(p.parent, locked_qc_.node) || p.justify.view > locked_qc_.view;
}

void HotStuffReplica::request_block(const Digest& node, NodeId from, ConsensusOutput& out) {
  if (!requested_.insert(node).second) return;
  send(out, from, SyncRequest{node}, view_);
}

std::vector<Transaction> HotStuffReplica::select_batch(const Digest& parent) const {
  std::unordered_set<Digest, DigestHash> in_branch;
  for (Digest h = parent; h != committed_hash_ && h != kGenesis;) {
    auto it = blocks_.find(h);
    if (it == blocks_.end() || it->second.height <= committed_height_) break;
    for (const auto& tx : it->second.batch) in_branch.insert(tx_id(tx));
    h = it->second.parent;
  }
  std::vector<Transaction> batch;
  for (const auto& tx : pending_) {
    if (static_cast<int>(batch.size()) >= config_.max_batch) break;
    const Digest id = tx_id(tx);
    if (committed_ids_.count(id) || in_branch.count(id)) continue;
    batch.push_back(tx);
  }
  return batch;
}

void HotStuffReplica::try_propose(ViewNumber view, SimTime, bool allow_empty, ConsensusOutput& out) {
  if (view != view_ || !is_leader(view)) return;
  auto& lv = leading_[view];
  if (lv.proposed || static_cast<int>(lv.new_views.size()) < config_.quorum()) return;

  const QuorumCert* high = &prepare_qc_;
  NodeId holder = self_;
  for (const auto& [sender, qc] : lv.new_views) {
    if (qc.view > high->view) {
      high = &qc;
      holder = sender;
    }
  }
  auto parent = blocks_.find(high->node);
  if (parent == blocks_.end()) {
    request_block(high->node, holder, out);
    return;
  }
  auto batch = select_batch(high->node);
  if (batch.empty() && !allow_empty) return;

  Proposal p{view, parent->second.height + 1, high->node, std::move(batch), *high};
  lv.proposed = true;
  store_block(p);
  if (fault_ != ConsensusFault::kEquivocate) {
    send(out, std::nullopt, p, view);
    return;
  }
  // Conflicting twin: same slot, different content, sent to the odd half.
  Proposal twin = p;
  twin.batch.push_back(Transaction::agg(self_, 0));
  store_block(twin);
  for (int i = 0; i < config_.n; ++i) {
    const auto to = static_cast<NodeId>(i);
    send(out, to, (i % 2 == 0) ? p : twin, view);
  }
}

ConsensusOutput HotStuffReplica::on_message(NodeId from, const ConsensusMessage& msg, SimTime now) {
  return std::visit(
      [&](const auto& m) -> ConsensusOutput {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NewViewMsg>) {
          return on_new_view(from, m, now);
        } else if constexpr (std::is_same_v<T, Proposal>) {
          return on_propose(from, m, now);
        } else if constexpr (std::is_same_v<T, Vote>) {
          return on_vote(m, now);
        } else if constexpr (std::is_same_v<T, PhaseMsg>) {
          if (m.kind == MessageKind::kDecide) return on_decide(m.qc, now);
          return on_phase(from, m, now);
        } else if constexpr (std::is_same_v<T, SyncRequest>) {
          ConsensusOutput out;
          if (auto it = blocks_.find(m.node); it != blocks_.end() && m.node != kGenesis) {
            send(out, from, SyncResponse{it->second}, view_);
          }
          return out;
        } else {
          ConsensusOutput out;
          store_block(m.proposal);
          retry_waiting(now, out);
          return out;
        }
      },
      msg);
}

ConsensusOutput HotStuffReplica::on_new_view(NodeId from, const NewViewMsg& msg, SimTime now) {
  ConsensusOutput out;
  if (msg.view < view_ || (msg.view == view_ && !is_leader(msg.view))) return out;
  if (!verify_qc(msg.high_qc) || msg.high_qc.phase != Phase::kPrepare) {
    ++stats_.rejected_attestations;
    return out;
  }
  auto& seen = announced_[from];
  seen = std::max(seen, msg.view);
  if (!is_leader(msg.view)) {
    sync_views(now, out);
    return out;
  }
  auto& lv = leading_[msg.view];
  lv.new_views[from] = msg.high_qc;
  if (static_cast<int>(lv.new_views.size()) >= config_.quorum()) {
    // n - f replicas already moved on; follow them.
    if (msg.view > view_) follow(msg.view, now, out);
    try_propose(msg.view, now, false, out);
  }
  sync_views(now, out);
  return out;
}

ConsensusOutput HotStuffReplica::on_heartbeat(ViewNumber view, SimTime now) {
  ConsensusOutput out;
  if (view != view_ || !is_leader(view)) return out;
  try_propose(view, now, true, out);
  // Still short of NEW-VIEWs (or a parent): keep the heartbeat alive.
  if (!leading_[view].proposed) out.timers.push_back({TimerRequest::Kind::kHeartbeat, view, now + config_.heartbeat});
  return out;
}

ConsensusOutput HotStuffReplica::on_transaction(const Transaction& tx, SimTime now) {
  ConsensusOutput out;
  const Digest id = tx_id(tx);
  if (committed_ids_.count(id) || !pending_ids_.insert(id).second) return out;
  pending_.push_back(tx);
  try_propose(view_, now, false, out);
  return out;
}

ConsensusOutput HotStuffReplica::on_propose(NodeId from, const Proposal& p, SimTime now) {
  ConsensusOutput out;
  if (from != leader_of(p.view, config_.n)) {
    ++stats_.ignored_proposals;
    out.warnings.push_back("proposal for view " + std::to_string(p.view) + " from non-leader " +
                           std::to_string(from));
    return out;
  }
  if (p.view < view_) return out;
  if (p.parent != p.justify.node || !verify_qc(p.justify) || p.justify.phase != Phase::kPrepare) {
    ++stats_.rejected_attestations;
    return out;
  }
  store_block(p);
  auto parent = blocks_.find(p.parent);
  if (parent == blocks_.end()) {
    waiting_proposals_.emplace_back(from, p);
    request_block(p.parent, from, out);
    return out;
  }
  if (p.height != parent->second.height + 1) {
    ++stats_.ignored_proposals;
    return out;
  }
  if (p.view > view_) follow(p.view, now, out);
  if (fault_ != ConsensusFault::kEquivocate) {
    if (voted_.count({p.view, Phase::kPrepare})) {
      ++stats_.withheld_votes;
      return out;
    }
    if (!safe_node(p)) {
      ++stats_.withheld_votes;
      out.warnings.push_back("proposal in view " + std::to_string(p.view) + " conflicts with locked QC of view " +
                             std::to_string(locked_qc_.view));
      return out;
    }
  }
  vote(out, p.view, Phase::kPrepare, p.hash());
  return out;
}

void HotStuffReplica::vote(ConsensusOutput& out, ViewNumber view, Phase phase, const Digest& node) {
  voted_.insert({view, phase});
  Vote v{self_, view, phase, node, signer_->sign(self_, vote_message(phase, view, node))};
  send(out, leader_of(view, config_.n), v, view);
}

ConsensusOutput HotStuffReplica::on_vote(const Vote& v, SimTime) {
  ConsensusOutput out;
  if (!is_leader(v.view) || v.view != view_) return out;
  if (v.voter >= static_cast<NodeId>(config_.n) ||
      !signer_->verify(v.voter, vote_message(v.phase, v.view, v.node), v.attestation)) {
    ++stats_.rejected_attestations;
    return out;
  }
  auto& lv = leading_[v.view];
  const auto key = std::make_tuple(v.phase, v.node);
  auto& votes = lv.votes[key];
  if (!votes.emplace(v.voter, v.attestation).second) {
    ++stats_.duplicate_votes;
    return out;
  }
  if (static_cast<int>(votes.size()) < config_.quorum() || lv.formed.count(key)) return out;
  lv.formed.insert(key);
  QuorumCert qc{v.view, v.phase, v.node, {votes.begin(), votes.end()}};
  verified_.insert(std::make_tuple(qc.view, qc.phase, qc.node, signature_digest(qc)));
  ++stats_.qcs_formed;
  send(out, std::nullopt, PhaseMsg{next_kind(v.phase), v.view, std::move(qc)}, v.view);
  return out;
}

ConsensusOutput HotStuffReplica::on_phase(NodeId from, const PhaseMsg& m, SimTime now) {
  ConsensusOutput out;
  if (from != leader_of(m.view, config_.n) || m.view < view_ || m.qc.view != m.view) return out;
  const Phase expected = m.kind == MessageKind::kPreCommit ? Phase::kPrepare : Phase::kPreCommit;
  if (m.qc.phase != expected || !verify_qc(m.qc)) {
    ++stats_.rejected_attestations;
    return out;
  }
  if (m.view > view_) follow(m.view, now, out);
  if (!blocks_.count(m.qc.node)) request_block(m.qc.node, from, out);
  const Phase my_vote = m.kind == MessageKind::kPreCommit ? Phase::kPreCommit : Phase::kCommit;
  if (m.kind == MessageKind::kPreCommit) {
    if (m.qc.view > prepare_qc_.view) prepare_qc_ = m.qc;
  } else if (m.qc.view > locked_qc_.view) {
    locked_qc_ = m.qc;
  }
  if (fault_ != ConsensusFault::kEquivocate && voted_.count({m.view, my_vote})) return out;
  vote(out, m.view, my_vote, m.qc.node);
  return out;
}

void HotStuffReplica::commit_through(const Digest& node, ConsensusOutput& out) {
  if (node == committed_hash_) return;
  auto target = blocks_.find(node);
  if (target == blocks_.end()) throw NotFound(node.hex());
  if (target->second.height <= committed_height_) {
    // A late decision for a block this replica already executed.
    if (!extends(committed_hash_, node) && !safety_violation_) {
      safety_violation_ = "decided block " + node.hex() + " at height " + std::to_string(target->second.height) +
                          " is not on the committed chain";
    }
    return;
  }
  std::vector<const Proposal*> chain;
  for (Digest h = node; h != committed_hash_;) {
    auto it = blocks_.find(h);
    if (it == blocks_.end()) throw NotFound(h.hex());
    if (it->second.height <= committed_height_) {
      if (!safety_violation_) {
        safety_violation_ = "decided block " + node.hex() + " does not extend committed height " +
                            std::to_string(committed_height_);
      }
      return;
    }
    chain.push_back(&it->second);
    h = it->second.parent;
  }
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const Proposal& p = **it;
    log_.push_back({p.height, p.hash(), p.batch});
    for (const auto& tx : p.batch) {
      const Digest id = tx_id(tx);
      if (!committed_ids_.insert(id).second) continue;
      out.committed.push_back(tx);
      pending_ids_.erase(id);
    }
  }
  committed_hash_ = node;
  committed_height_ = chain.front()->height;
  std::erase_if(pending_, [&](const Transaction& tx) { return committed_ids_.count(tx_id(tx)) != 0; });
}

ConsensusOutput HotStuffReplica::on_decide(const QuorumCert& qc, SimTime now) {
  ConsensusOutput out;
  if (qc.phase != Phase::kCommit || !verify_qc(qc)) {
    ++stats_.rejected_attestations;
    return out;
  }
  try {
    commit_through(qc.node, out);
  } catch (const NotFound& missing) {
    waiting_decides_.push_back(qc);
    request_block(Digest::from_hex(missing.what()), leader_of(qc.view, config_.n), out);
  }
  stats_.committed_views.insert(qc.view);
  if (qc.view >= view_) {
    pacemaker_.on_commit();
    enter_view(qc.view + 1, now, out);
  }
  return out;
}

ConsensusOutput HotStuffReplica::on_timeout(ViewNumber view, SimTime now) {
  ConsensusOutput out;
  if (view != view_) return out;
  ++stats_.timeouts;
  pacemaker_.on_failure();
  // Stay in this view until n - f replicas ask to leave it; repeat the
  // request on every expiry in case it was lost.
  wish(std::max(wished_, view_ + 1), out);
  out.timers.push_back({TimerRequest::Kind::kViewTimeout, view_, now + pacemaker_.timeout()});
  sync_views(now, out);
  return out;
}

void HotStuffReplica::retry_waiting(SimTime now, ConsensusOutput& out) {
  auto decides = std::move(waiting_decides_);
  waiting_decides_.clear();
  for (const auto& qc : decides) {
    try {
      commit_through(qc.node, out);
    } catch (const NotFound& missing) {
      waiting_decides_.push_back(qc);
      request_block(Digest::from_hex(missing.what()), leader_of(qc.view, config_.n), out);
    }
  }
  auto proposals = std::move(waiting_proposals_);
  waiting_proposals_.clear();
  for (const auto& [from, p] : proposals) {
    if (p.view >= view_) out.append(on_propose(from, p, now));
  }
  if (is_leader(view_)) {
    auto it = leading_.find(view_);
    if (it != leading_.end() && !it->second.proposed) try_propose(view_, now, false, out);
  }
}

}  // namespace defl
