#include "defl/simnet.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace defl {

namespace {

std::string join_reason(const std::string& reason, const std::vector<std::string>& trace) {
  std::ostringstream os;
  os << reason;
  if (!trace.empty()) os << "; last event: " << trace.back();
  return os.str();
}

}  // namespace

StallError::StallError(const std::string& reason, std::vector<std::string> t)
    : Error(join_reason(reason, t)), trace(std::move(t)) {}

SimTime DelayModel::draw(std::uint64_t seed, NodeId from, NodeId to, std::uint64_t counter, SimTime now) const {
  const bool before_gst = now < gst;
  if (!jitter) return before_gst ? pre_gst_max : delta;
  const std::uint64_t link = (static_cast<std::uint64_t>(from) << 32) | to;
  const std::uint64_t u = mix_seed(seed, link, counter);
  if (!before_gst) return 1 + static_cast<SimTime>(u % static_cast<std::uint64_t>(delta));
  if (drop_before_gst) {
    const double p = static_cast<double>(mix_seed(u) >> 11) * 0x1.0p-53;
    if (p < drop_probability) return -1;
  }
  return 1 + static_cast<SimTime>(u % static_cast<std::uint64_t>(pre_gst_max));
}

SimTime Context::now() const { return sim_.now(); }
int Context::n() const { return sim_.n(); }
void Context::send(NodeId to, Bytes payload) { sim_.send(self_, to, std::move(payload)); }

void Context::broadcast(const Bytes& payload) {
  for (int i = 0; i < sim_.n(); ++i) {
    if (static_cast<NodeId>(i) != self_) sim_.send(self_, static_cast<NodeId>(i), payload);
  }
}

void Context::set_timer(SimTime at, std::uint64_t tag) { sim_.set_timer(self_, at, tag); }

std::uint64_t SimReport::total_sent() const {
  std::uint64_t s = 0;
  for (const auto& t : traffic) s += t.bytes_sent;
  return s;
}

std::uint64_t SimReport::total_received() const {
  std::uint64_t s = 0;
  for (const auto& t : traffic) s += t.bytes_received;
  return s;
}

Simulator::Simulator(std::vector<std::unique_ptr<Process>> processes, DelayModel delays, std::uint64_t seed)
    : processes_(std::move(processes)), delays_(delays), seed_(seed) {
  if (processes_.empty()) throw ParameterError("simulator needs at least one process");
  if (delays_.delta < 1 || delays_.pre_gst_max < 1) throw ParameterError("delays must be at least one tick");
  const auto n = processes_.size();
  link_counters_.assign(n * n, 0);
  crash_at_.assign(n, std::numeric_limits<SimTime>::max());
  faulty_.assign(n, false);
  report_.traffic.resize(n);
}

void Simulator::crash(NodeId node, SimTime at) {
  crash_at_.at(node) = at;
  faulty_.at(node) = true;
}

bool Simulator::crashed(NodeId node, SimTime at) const { return at >= crash_at_.at(node); }

void Simulator::mark_faulty(NodeId node) { faulty_.at(node) = true; }

void Simulator::send(NodeId from, NodeId to, Bytes payload) {
  if (to >= processes_.size()) throw ParameterError("send to unknown node");
  SimEvent e;
  e.target = to;
  e.from = from;
  e.sent_at = now_;
  e.sequence = next_sequence_++;
  if (from == to) {
    // Loopback costs no network bytes and no delay.
    e.fire_time = now_;
    e.payload = std::move(payload);
    queue_.push(std::move(e));
    return;
  }
  const auto size = payload.size();
  auto& sender = report_.traffic[from];
  sender.bytes_sent += size;
  ++sender.messages_sent;
  if (!payload.empty()) sender.bytes_by_kind[payload[0]] += size;
  const SimTime delay = delays_.draw(seed_, from, to, link_counters_[from * processes_.size() + to]++, now_);
  if (delay < 0) {
    report_.dropped_bytes += size;
    return;
  }
  e.fire_time = now_ + delay;
  e.payload = std::move(payload);
  report_.in_flight_bytes += size;
  queue_.push(std::move(e));
}

void Simulator::set_timer(NodeId node, SimTime at, std::uint64_t tag) {
  SimEvent e;
  e.fire_time = std::max(at, now_);
  e.sequence = next_sequence_++;
  e.target = node;
  e.from = node;
  e.sent_at = now_;
  e.is_timer = true;
  e.tag = tag;
  queue_.push(std::move(e));
}

void Simulator::start() {
  started_ = true;
  for (std::size_t i = 0; i < processes_.size(); ++i) {
    if (crashed(static_cast<NodeId>(i), 0)) continue;
    Context ctx(*this, static_cast<NodeId>(i));
    processes_[i]->on_start(ctx);
  }
}

void Simulator::record(const SimEvent& e) {
  trace_.push_back({e.fire_time, e.from, e.target, e.is_timer, e.tag,
                    e.payload.empty() ? std::uint8_t{0} : e.payload[0], e.payload.size()});
  if (trace_.size() > kTraceLength) trace_.pop_front();
}

std::vector<std::string> Simulator::trace() const {
  std::vector<std::string> out;
  for (const auto& t : trace_) {
    std::ostringstream os;
    os << "t=" << t.time << ' ';
    if (t.is_timer) {
      os << "timer node=" << t.to << " tag=0x" << std::hex << t.tag;
    } else {
      os << "msg " << t.from << "->" << t.to << " kind=" << int(t.kind) << " bytes=" << t.size;
    }
    out.push_back(os.str());
  }
  return out;
}

void Simulator::step() {
  SimEvent e = std::move(const_cast<SimEvent&>(queue_.top()));
  queue_.pop();
  now_ = e.fire_time;
  ++report_.events;
  const bool loopback = !e.is_timer && e.from == e.target;
  if (!e.is_timer && !loopback) report_.in_flight_bytes -= e.payload.size();
  if (crashed(e.target, now_)) {
    if (!e.is_timer && !loopback) report_.dropped_bytes += e.payload.size();
    return;
  }
  record(e);
  Context ctx(*this, e.target);
  if (e.is_timer) {
    processes_[e.target]->on_timer(ctx, e.tag);
    return;
  }
  if (!loopback) {
    auto& receiver = report_.traffic[e.target];
    receiver.bytes_received += e.payload.size();
    ++receiver.messages_received;
    if (e.sent_at >= delays_.gst && !faulty_[e.from] && !faulty_[e.target] &&
        now_ - e.sent_at > delays_.delta) {
      ++report_.late_deliveries;
    }
  }
  processes_[e.target]->on_message(ctx, e.from, e.payload);
}

const SimReport& Simulator::advance_to(SimTime until) {
  if (!started_) start();
  while (!queue_.empty() && queue_.top().fire_time <= until) step();
  now_ = std::max(now_, until);
  report_.end_time = now_;
  return report_;
}

const SimReport& Simulator::run_until(const std::function<bool()>& done, SimTime time_limit) {
  if (!started_) start();
  while (!done()) {
    if (queue_.empty()) throw StallError("event queue drained before the run completed", trace());
    if (queue_.top().fire_time > time_limit) {
      throw StallError("time limit " + std::to_string(time_limit) + " reached before the run completed", trace());
    }
    step();
  }
  report_.end_time = now_;
  return report_;
}

}  // namespace defl
