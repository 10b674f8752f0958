#include "defl/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace defl {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  read(j, key, v);
  out = v;
}

std::string format_g(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

bool poisoning_attack(AttackKind kind) {
  return kind == AttackKind::kGaussian || kind == AttackKind::kSignFlip || kind == AttackKind::kLabelFlip;
}

std::string to_string(PartitionKind kind) { return kind == PartitionKind::kIid ? "iid" : "dirichlet"; }

}  // namespace

SimTime ExperimentConfig::resolved_time_limit() const {
  if (time_limit) return *time_limit;
  const SimTime per_round = system.gst_lt + train_max + fetch_wait + 8 * view_timeout;
  return network.gst + 4 * (system.rounds + 2) * per_round + drain;
}

ExperimentConfig default_config(int n) {
  ExperimentConfig c;
  c.system.n = n;
  c.system.f = std::max(0, (n - 3) / 3);
  c.system.d = c.task.d;
  c.system.tau = 2;
  c.system.rounds = 50;
  c.system.gst_lt = 200;
  c.f_assumed = std::max(0, (n - 1) / 3);
  c.training.epochs = 1;
  c.training.batch_size = 32;
  c.training.schedule.gamma0 = 32.0;
  return c;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"name", "n", "f", "tau", "rounds", "gst_lt", "k", "neighborhood", "rule", "f_assumed", "task",
              "partition", "attack", "network", "consensus", "training", "seeds", "drain", "time_limit"});
  int n = 4;
  read(j, "n", n);
  ExperimentConfig c = default_config(n);
  read(j, "name", c.name);
  read(j, "f", c.system.f);
  read(j, "tau", c.system.tau);
  read(j, "rounds", c.system.rounds);
  read(j, "gst_lt", c.system.gst_lt);
  read_optional(j, "k", c.system.k);
  read_optional(j, "neighborhood", c.system.neighborhood);
  read(j, "f_assumed", c.f_assumed);
  if (j.contains("rule")) c.rule = parse_aggregation_rule(j.at("rule").get<std::string>());

  if (j.contains("task")) {
    const auto& t = j.at("task");
    check_keys(t, "task", {"kind", "d", "train_examples", "test_examples", "label_noise", "scale", "l2"});
    if (t.contains("kind")) c.task.kind = parse_task_kind(t.at("kind").get<std::string>());
    read(t, "d", c.task.d);
    read(t, "train_examples", c.task.train_examples);
    read(t, "test_examples", c.task.test_examples);
    read(t, "label_noise", c.task.label_noise);
    read(t, "scale", c.task.scale);
    read(t, "l2", c.task.l2);
  }
  c.system.d = c.task.d;

  if (j.contains("partition")) {
    const auto& p = j.at("partition");
    check_keys(p, "partition", {"kind", "alpha"});
    if (p.contains("kind")) {
      const auto kind = p.at("kind").get<std::string>();
      if (kind == "iid") {
        c.partition = PartitionKind::kIid;
      } else if (kind == "dirichlet") {
        c.partition = PartitionKind::kDirichlet;
      } else {
        throw ConfigError("unknown partition kind '" + kind + "'");
      }
    }
    read(p, "alpha", c.alpha);
  }

  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    check_keys(a, "attack", {"kind", "factor", "victims", "crash_round", "consensus", "gaussian_replace", "crash_time"});
    if (a.contains("kind")) c.attack.kind = parse_attack_kind(a.at("kind").get<std::string>());
    read(a, "factor", c.attack.factor);
    std::vector<NodeId> victims;
    read(a, "victims", victims);
    c.attack.victims = {victims.begin(), victims.end()};
    read(a, "crash_round", c.attack.crash_round);
    if (a.contains("consensus")) c.attack.consensus = parse_consensus_fault(a.at("consensus").get<std::string>());
    read(a, "gaussian_replace", c.attack.gaussian_replace);
    read(a, "crash_time", c.crash_time);
  }

  if (j.contains("network")) {
    const auto& w = j.at("network");
    check_keys(w, "network", {"delta", "gst", "pre_gst_max", "drop_before_gst", "drop_probability", "jitter"});
    read(w, "delta", c.network.delta);
    read(w, "gst", c.network.gst);
    read(w, "pre_gst_max", c.network.pre_gst_max);
    read(w, "drop_before_gst", c.network.drop_before_gst);
    read(w, "drop_probability", c.network.drop_probability);
    read(w, "jitter", c.network.jitter);
  }

  if (j.contains("consensus")) {
    const auto& k = j.at("consensus");
    check_keys(k, "consensus", {"view_timeout", "heartbeat", "max_batch"});
    read(k, "view_timeout", c.view_timeout);
    read(k, "heartbeat", c.heartbeat);
    read(k, "max_batch", c.max_batch);
  }

  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, "training", {"epochs", "batch_size", "gamma0", "train_min", "train_max", "fetch_wait"});
    read(t, "epochs", c.training.epochs);
    read(t, "batch_size", c.training.batch_size);
    read(t, "gamma0", c.training.schedule.gamma0);
    read(t, "train_min", c.train_min);
    read(t, "train_max", c.train_max);
    read(t, "fetch_wait", c.fetch_wait);
  }

  read(j, "seeds", c.seeds);
  read(j, "drain", c.drain);
  read_optional(j, "time_limit", c.time_limit);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["n"] = c.system.n;
  j["f"] = c.system.f;
  j["tau"] = c.system.tau;
  j["rounds"] = c.system.rounds;
  j["gst_lt"] = c.system.gst_lt;
  j["k"] = c.system.k ? json(*c.system.k) : json(nullptr);
  j["neighborhood"] = c.system.neighborhood ? json(*c.system.neighborhood) : json(nullptr);
  j["rule"] = to_string(c.rule);
  j["f_assumed"] = c.f_assumed;
  j["task"] = {{"kind", to_string(c.task.kind)},
               {"d", c.task.d},
               {"train_examples", c.task.train_examples},
               {"test_examples", c.task.test_examples},
               {"label_noise", c.task.label_noise},
               {"scale", c.task.scale},
               {"l2", c.task.l2}};
  j["partition"] = {{"kind", to_string(c.partition)}, {"alpha", c.alpha}};
  j["attack"] = {{"kind", to_string(c.attack.kind)},
                 {"factor", c.attack.factor},
                 {"victims", std::vector<NodeId>(c.attack.victims.begin(), c.attack.victims.end())},
                 {"crash_round", c.attack.crash_round},
                 {"consensus", to_string(c.attack.consensus)},
                 {"gaussian_replace", c.attack.gaussian_replace},
                 {"crash_time", c.crash_time}};
  j["network"] = {{"delta", c.network.delta},
                  {"gst", c.network.gst},
                  {"pre_gst_max", c.network.pre_gst_max},
                  {"drop_before_gst", c.network.drop_before_gst},
                  {"drop_probability", c.network.drop_probability},
                  {"jitter", c.network.jitter}};
  j["consensus"] = {{"view_timeout", c.view_timeout}, {"heartbeat", c.heartbeat}, {"max_batch", c.max_batch}};
  j["training"] = {{"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size},
                   {"gamma0", c.training.schedule.gamma0},
                   {"train_min", c.train_min},
                   {"train_max", c.train_max},
                   {"fetch_wait", c.fetch_wait}};
  j["seeds"] = c.seeds;
  j["drain"] = c.drain;
  j["time_limit"] = c.time_limit ? json(*c.time_limit) : json(nullptr);
  return j.dump(2);
}

void validate_experiment(const ExperimentConfig& c) {
  validate_config(c.system);
  const int n = c.system.n;
  if (c.system.d != c.task.d) throw ConfigError("system d differs from task d");
  if (c.task.d < 1) throw ConfigError("task d < 1");
  if (c.task.train_examples < n || c.task.test_examples < 1) throw ConfigError("too few examples for n shards");
  if (c.partition == PartitionKind::kDirichlet && !(c.alpha > 0)) throw ConfigError("dirichlet alpha <= 0");
  if (c.f_assumed < 0) throw ConfigError("f_assumed < 0");
  for (auto v : c.attack.victims) {
    if (v >= static_cast<NodeId>(n)) throw ConfigError("victim " + std::to_string(v) + " outside [0, n)");
  }
  if (c.attack.kind == AttackKind::kNone && c.attack.consensus == ConsensusFault::kNone && !c.attack.victims.empty()) {
    throw ConfigError("victims listed without an attack");
  }
  const int victims = static_cast<int>(c.attack.victims.size());
  if (c.attack.victims.count(0) && victims == n) throw ConfigError("no honest node left");
  if (poisoning_attack(c.attack.kind) && c.attack.consensus == ConsensusFault::kNone && victims > c.f_assumed) {
    throw ConfigError("more poisoning victims than f_assumed");
  }
  if (c.attack.protocol_level() && victims > c.system.f) throw ConfigError("more protocol-level victims than f");
  if (c.attack.kind == AttackKind::kSignFlip && !(c.attack.factor < 0)) throw ConfigError("sign_flip factor must be < 0");
  if (c.attack.kind == AttackKind::kGaussian && c.attack.factor < 0) throw ConfigError("gaussian factor must be >= 0");
  if (c.rule != AggregationRule::kFedAvg) {
    AggregationParams p;
    p.f_assumed = c.f_assumed;
    p.k = c.system.k;
    p.neighborhood = c.system.neighborhood;
    if (!p.feasible(n)) throw ConfigError("aggregation rule infeasible with n candidates and f_assumed");
  }
  if (c.network.delta < 1 || c.network.pre_gst_max < 1 || c.network.gst < 0) throw ConfigError("bad network delays");
  if (c.network.drop_probability < 0 || c.network.drop_probability > 1) throw ConfigError("drop_probability outside [0, 1]");
  if (c.view_timeout < 1 || c.heartbeat < 1 || c.max_batch < 1) throw ConfigError("bad consensus timing");
  if (c.train_min < 1 || c.train_max < c.train_min) throw ConfigError("bad training duration range");
  if (c.train_max >= c.system.gst_lt) throw ConfigError("training may not fit in gst_lt");
  if (c.fetch_wait < 0 || c.drain < 0) throw ConfigError("negative fetch_wait or drain");
  if (c.training.epochs < 1 || c.training.batch_size < 1 || !(c.training.schedule.gamma0 > 0)) {
    throw ConfigError("bad training parameters");
  }
  if (c.seeds.empty()) throw ConfigError("no seeds");
}

RunResult run_once(const ExperimentConfig& config, std::uint64_t seed) {
  validate_experiment(config);
  const int n = config.system.n;

  auto setup = std::make_shared<SharedSetup>();
  setup->task = generate_task(config.task, mix_seed(seed, 1));
  setup->shards = config.partition == PartitionKind::kIid
                      ? iid_partition(setup->task.train, n, mix_seed(seed, 2))
                      : dirichlet_partition(setup->task.train, n, config.alpha, mix_seed(seed, 2));
  {
    std::mt19937_64 rng(mix_seed(seed, 3));
    std::normal_distribution<double> normal(0.0, 0.1);
    setup->bootstrap = WeightVector::NullaryExpr(config.task.d, [&](Eigen::Index) { return normal(rng); });
  }
  setup->signer = std::make_shared<KeyedHashSigner>(n, mix_seed(seed, 4));

  NodeParams params;
  params.n = n;
  params.f = config.system.f;
  params.tau = config.system.tau;
  params.gst_lt = config.system.gst_lt;
  params.consensus = {n, config.system.f, config.view_timeout, config.heartbeat, config.max_batch};
  params.train_min = config.train_min;
  params.train_max = config.train_max;
  params.fetch_wait = config.fetch_wait;
  params.train = config.training;
  params.rule = config.rule;
  params.aggregation.f_assumed = config.f_assumed;
  params.aggregation.k = config.system.k;
  params.aggregation.neighborhood = config.system.neighborhood;
  std::vector<double> sizes;
  for (const auto& s : setup->shards) sizes.push_back(static_cast<double>(s.size()));
  params.aggregation.sample_sizes = sizes;
  params.max_round = static_cast<RoundId>(config.system.rounds);

  std::vector<std::unique_ptr<Process>> processes;
  std::vector<DeflNode*> nodes;
  for (int i = 0; i < n; ++i) {
    auto node = std::make_unique<DeflNode>(static_cast<NodeId>(i), params, setup, config.attack, seed);
    nodes.push_back(node.get());
    processes.push_back(std::move(node));
  }
  Simulator sim(std::move(processes), config.network, mix_seed(seed, 5));
  for (auto v : config.attack.victims) {
    sim.mark_faulty(v);
    if (config.attack.consensus == ConsensusFault::kCrash) sim.crash(v, config.crash_time);
  }

  std::vector<DeflNode*> honest;
  for (auto* node : nodes) {
    if (!node->byzantine()) honest.push_back(node);
  }
  DeflNode* reference = honest.front();

  RunResult result;
  result.seed = seed;
  const Dataset& train = setup->task.train;
  const Task& task = setup->task.task;
  // Honest nodes aggregating the same snapshot must produce the same weights.
  std::map<std::pair<RoundId, Digest>, Digest> aggregates;
  auto compare_aggregate = [&](NodeId node, RoundId completed, const LastSnapshot& last, const RoundPlan& plan) {
    if (!plan.aggregated) return;
    ByteWriter key;
    for (const auto& slot : last.slots) {
      key.u8(slot ? 1 : 0);
      if (slot) key.digest(digest(*slot));
    }
    const auto [it, fresh] = aggregates.emplace(std::make_pair(completed, sha256(key.bytes())), digest(plan.w_agg));
    ++result.aggregate_comparisons;
    if (!fresh && it->second != digest(plan.w_agg)) {
      result.violations.push_back("node " + std::to_string(node) + " aggregated round " + std::to_string(completed) +
                                  " differently from a peer with the same inputs");
    }
  };
  for (auto* node : honest) {
    if (node != reference) node->set_observer(compare_aggregate);
  }
  reference->set_observer([&](NodeId id, RoundId completed, const LastSnapshot& last, const RoundPlan& plan) {
    compare_aggregate(id, completed, last, plan);
    if (completed == 0) return;
    const Evaluation eval = evaluate(task, plan.w_agg, setup->task.test);
    RunRecord rec;
    rec.seed = seed;
    rec.round = completed;
    rec.rule = to_string(config.rule);
    rec.attack = to_string(config.attack.kind);
    rec.beta = config.attack.beta(n);
    rec.accuracy = eval.accuracy;
    rec.loss = task.loss(plan.w_agg, train);
    rec.grad_norm = task.gradient(plan.w_agg, train).norm();
    const SimReport& net = sim.report();
    for (const auto& t : net.traffic) {
      rec.bytes_sent_total += t.bytes_sent;
      rec.bytes_received_total += t.bytes_received;
      rec.bytes_sent_max_node = std::max(rec.bytes_sent_max_node, t.bytes_sent);
      rec.bytes_received_max_node = std::max(rec.bytes_received_max_node, t.bytes_received);
    }
    for (auto* node : honest) rec.pool_peak_bytes = std::max(rec.pool_peak_bytes, node->pool().stats().peak_bytes);
    rec.responses = reference->metrics().responses;
    rec.sim_time = sim.now();
    result.records.push_back(rec);

    // Did a Byzantine candidate make it into the aggregate?
    std::vector<WeightVector> vs;
    std::vector<NodeId> owners;
    bool contested = false;
    for (std::size_t i = 0; i < last.slots.size(); ++i) {
      if (!last.slots[i]) continue;
      vs.push_back(*last.slots[i]);
      owners.push_back(static_cast<NodeId>(i));
      contested = contested || config.attack.is_victim(static_cast<NodeId>(i));
    }
    if (!contested || !plan.aggregated) return;
    ++result.contested_rounds;
    bool selected = false;
    if (config.rule == AggregationRule::kFedAvg) {
      selected = true;
    } else if (config.rule == AggregationRule::kKrum) {
      const auto best = krum_select(vs, owners, params.aggregation.resolved_neighborhood(static_cast<int>(vs.size())));
      selected = config.attack.is_victim(best.owner);
    } else {
      for (auto idx : multi_krum_selection(vs, owners, params.aggregation)) {
        selected = selected || config.attack.is_victim(owners[idx]);
      }
    }
    if (selected) ++result.poisoned_selected;
  });

  const SimTime limit = config.resolved_time_limit();
  sim.run_until(
      [&] {
        for (auto* node : honest) {
          if (!node->finished()) return false;
        }
        return true;
      },
      limit);
  if (config.drain > 0) {
    const SimTime until = sim.now() + config.drain;
    sim.advance_to(until);
  }

  result.network = sim.report();
  for (auto* node : honest) {
    result.pool_peak_bytes = std::max(result.pool_peak_bytes, node->pool().stats().peak_bytes);
    result.view_timeouts += node->consensus().stats().timeouts;
    result.fallbacks += node->client().fallbacks();
    result.abandoned += node->client().abandoned();
    if (node->consensus().safety_violation()) {
      result.logs_consistent = false;
      result.violations.push_back("node " + std::to_string(node->id()) + ": " + *node->consensus().safety_violation());
    }
    for (const auto& t : node->metrics().own_transactions) {
      if (!t.committed) {
        ++result.uncommitted;
        continue;
      }
      const SimTime from = std::max(t.submitted, config.network.gst);
      result.worst_commit_delay = std::max(result.worst_commit_delay, *t.committed - from);
    }
  }
  result.committed_height = reference->consensus().committed_height();

  // Pairwise comparison of honest logs and per-round state digests.
  for (std::size_t a = 0; a < honest.size(); ++a) {
    for (std::size_t b = a + 1; b < honest.size(); ++b) {
      const auto& la = honest[a]->consensus().log();
      const auto& lb = honest[b]->consensus().log();
      const std::size_t common = std::min(la.size(), lb.size());
      for (std::size_t h = 0; h < common; ++h) {
        if (la[h].height != lb[h].height || la[h].hash != lb[h].hash) {
          result.logs_consistent = false;
          result.violations.push_back("logs of nodes " + std::to_string(honest[a]->id()) + " and " +
                                      std::to_string(honest[b]->id()) + " differ at height " +
                                      std::to_string(la[h].height));
          break;
        }
      }
      const auto& da = honest[a]->metrics().state_digests;
      const auto& db = honest[b]->metrics().state_digests;
      for (const auto& [round, dg] : da) {
        auto it = db.find(round);
        if (it != db.end() && it->second != dg) {
          result.states_consistent = false;
          result.violations.push_back("state digests of nodes " + std::to_string(honest[a]->id()) + " and " +
                                      std::to_string(honest[b]->id()) + " differ at round " + std::to_string(round));
        }
      }
    }
  }

  const auto& net = result.network;
  if (net.total_sent() != net.total_received() + net.dropped_bytes + net.in_flight_bytes) {
    result.violations.push_back("byte accounting does not balance");
  }
  if (net.late_deliveries != 0) result.violations.push_back("post-GST delivery exceeded delta");
  return result;
}

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double sq = 0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(xs.size() - 1));
  }
  return s;
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  validate_experiment(config);
  ExperimentSummary summary;
  summary.config = config;
  std::vector<double> acc, loss, grad, bytes, pool;
  for (auto seed : config.seeds) {
    RunResult run = run_once(config, seed);
    if (!run.records.empty()) {
      const auto& last = run.records.back();
      acc.push_back(last.accuracy);
      loss.push_back(last.loss);
      grad.push_back(last.grad_norm);
      bytes.push_back(static_cast<double>(last.bytes_received_total));
      pool.push_back(static_cast<double>(last.pool_peak_bytes));
    }
    summary.runs.push_back(std::move(run));
  }
  summary.accuracy = summarize(acc);
  summary.loss = summarize(loss);
  summary.grad_norm = summarize(grad);
  summary.bytes_received_total = summarize(bytes);
  summary.pool_peak_bytes = summarize(pool);
  return summary;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> columns{
      "seed",          "round",        "rule",
      "attack",        "beta",         "accuracy",
      "loss",          "grad_norm",    "bytes_sent_total",
      "bytes_received_total",          "bytes_sent_max_node",
      "bytes_received_max_node",       "pool_peak_bytes",
      "resp_ok",       "resp_already_upd",
      "resp_not_meet_quorum",          "resp_already_agg",
      "sim_time"};
  return columns;
}

std::string csv_text(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : records) {
    os << r.seed << ',' << r.round << ',' << r.rule << ',' << r.attack << ',' << format_g(r.beta) << ','
       << format_g(r.accuracy) << ',' << format_g(r.loss) << ',' << format_g(r.grad_norm) << ',' << r.bytes_sent_total
       << ',' << r.bytes_received_total << ',' << r.bytes_sent_max_node << ',' << r.bytes_received_max_node << ','
       << r.pool_peak_bytes;
    for (auto count : r.responses) os << ',' << count;
    os << ',' << r.sim_time << '\n';
  }
  return os.str();
}

void emit_csv(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  if (records.empty()) throw ParameterError("no records to write");
  const std::string text = csv_text(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::string> scenario_names() { return {"attack-sweep", "byzantine-rate-sweep", "scale-sweep"}; }

std::vector<ScenarioRow> scenario_table(const std::string& name) {
  struct Grid {
    std::string label;
    ExperimentConfig config;
  };
  std::vector<Grid> grid;
  if (name == "attack-sweep") {
    struct Threat {
      std::string label;
      AttackKind kind;
      double factor;
    };
    const std::vector<Threat> threats{
        {"none", AttackKind::kNone, 0.0},          {"gaussian_0.03", AttackKind::kGaussian, 0.03},
        {"gaussian_1.00", AttackKind::kGaussian, 1.0}, {"sign_flip_-1", AttackKind::kSignFlip, -1.0},
        {"sign_flip_-2", AttackKind::kSignFlip, -2.0}, {"sign_flip_-4", AttackKind::kSignFlip, -4.0},
        {"label_flip", AttackKind::kLabelFlip, 0.0},
    };
    for (const auto& t : threats) {
      ExperimentConfig c = default_config(4);
      c.attack.kind = t.kind;
      c.attack.factor = t.factor;
      if (t.kind != AttackKind::kNone) c.attack.victims = {3};
      grid.push_back({t.label, c});
    }
  } else if (name == "byzantine-rate-sweep") {
    const std::vector<std::pair<int, int>> splits{{4, 0}, {3, 1}, {7, 0}, {6, 1}, {5, 2},
                                                  {10, 0}, {9, 1}, {8, 2}, {7, 3}};
    for (auto [a, b] : splits) {
      const int n = a + b;
      ExperimentConfig c = default_config(n);
      c.attack.kind = AttackKind::kGaussian;
      c.attack.factor = 1.0;
      for (int v = 0; v < b; ++v) c.attack.victims.insert(static_cast<NodeId>(n - 1 - v));
      grid.push_back({std::to_string(a) + "+" + std::to_string(b), c});
    }
  } else if (name == "scale-sweep") {
    for (int n : {4, 7, 10}) grid.push_back({"n=" + std::to_string(n), default_config(n)});
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }

  std::vector<ScenarioRow> rows;
  for (const auto& g : grid) {
    for (auto rule : {AggregationRule::kFedAvg, AggregationRule::kMultiKrum}) {
      ScenarioRow row{g.label, g.config};
      row.config.rule = rule;
      row.config.name = name + "/" + g.label + "/" + to_string(rule);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace defl
