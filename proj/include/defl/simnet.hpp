#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "defl/core.hpp"

namespace defl {

struct StallError : Error {
  StallError(const std::string& reason, std::vector<std::string> trace);
  std::vector<std::string> trace;
};

struct DelayModel {
  SimTime delta = 5;
  SimTime gst = 0;
  SimTime pre_gst_max = 10;
  bool drop_before_gst = false;
  // Drop probability for pre-GST messages when drop_before_gst is set.
  double drop_probability = 0.1;
  // Off: every message takes exactly delta (pre_gst_max before GST).
  bool jitter = true;

  /// Delivery delay for the `counter`-th message on link (from, to); a
  /// negative value means the message is dropped.
  SimTime draw(std::uint64_t seed, NodeId from, NodeId to, std::uint64_t counter, SimTime now) const;
};

class Simulator;

/// Handle through which a process acts during one event.
class Context {
 public:
  Context(Simulator& sim, NodeId self) : sim_(sim), self_(self) {}

  NodeId self() const { return self_; }
  SimTime now() const;
  int n() const;
  void send(NodeId to, Bytes payload);
  /// To every other node.
  void broadcast(const Bytes& payload);
  void set_timer(SimTime at, std::uint64_t tag);

 private:
  Simulator& sim_;
  NodeId self_;
};

class Process {
 public:
  virtual ~Process() = default;
  virtual void on_start(Context& ctx) = 0;
  virtual void on_message(Context& ctx, NodeId from, const Bytes& payload) = 0;
  virtual void on_timer(Context& ctx, std::uint64_t tag) = 0;
};

struct NodeTraffic {
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;
  // Bytes and messages by leading kind byte.
  std::array<std::uint64_t, 256> bytes_by_kind{};
};

struct SimReport {
  SimTime end_time = 0;
  std::uint64_t events = 0;
  std::vector<NodeTraffic> traffic;
  std::uint64_t dropped_bytes = 0;
  std::uint64_t in_flight_bytes = 0;
  // Honest-to-honest deliveries sent after GST that took longer than delta.
  std::uint64_t late_deliveries = 0;

  std::uint64_t total_sent() const;
  std::uint64_t total_received() const;
};

struct SimEvent {
  SimTime fire_time = 0;
  std::uint64_t sequence = 0;
  NodeId target = 0;
  bool is_timer = false;
  NodeId from = 0;
  SimTime sent_at = 0;
  std::uint64_t tag = 0;
  Bytes payload;
};

/// Single-threaded discrete-event network. Events fire in (time, sequence)
/// order; every random draw is a function of (seed, link, counter).
class Simulator {
 public:
  Simulator(std::vector<std::unique_ptr<Process>> processes, DelayModel delays, std::uint64_t seed);

  /// Node stops processing and receiving from `at` on. Bytes addressed to it
  /// afterwards count as dropped.
  void crash(NodeId node, SimTime at);
  bool crashed(NodeId node, SimTime at) const;
  /// Nodes excluded from the partial-synchrony delivery check.
  void mark_faulty(NodeId node);

  void send(NodeId from, NodeId to, Bytes payload);
  void set_timer(NodeId node, SimTime at, std::uint64_t tag);

  /// Runs until `done` holds (checked after each event). Throws StallError
  /// when the queue drains or time passes `time_limit` first.
  const SimReport& run_until(const std::function<bool()>& done, SimTime time_limit);
  /// Processes every event due at or before `until`; never stalls.
  const SimReport& advance_to(SimTime until);

  SimTime now() const { return now_; }
  int n() const { return static_cast<int>(processes_.size()); }
  Process& process(NodeId id) { return *processes_.at(id); }
  const SimReport& report() const { return report_; }
  const DelayModel& delays() const { return delays_; }
  /// The most recent events, oldest first.
  std::vector<std::string> trace() const;

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.fire_time != b.fire_time ? a.fire_time > b.fire_time : a.sequence > b.sequence;
    }
  };

  struct TraceEntry {
    SimTime time;
    NodeId from, to;
    bool is_timer;
    std::uint64_t tag;
    std::uint8_t kind;
    std::size_t size;
  };
  static constexpr std::size_t kTraceLength = 64;

  void start();
  void record(const SimEvent& e);
  void step();

  std::vector<std::unique_ptr<Process>> processes_;
  DelayModel delays_;
  std::uint64_t seed_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::uint64_t next_sequence_ = 0;
  std::vector<std::uint64_t> link_counters_;
  std::vector<SimTime> crash_at_;
  std::vector<bool> faulty_;
  SimTime now_ = 0;
  bool started_ = false;
  SimReport report_;
  std::deque<TraceEntry> trace_;
};

}  // namespace defl
