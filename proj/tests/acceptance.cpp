// One line per acceptance criterion; exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "defl/harness.hpp"
#include "oracles/oracles.hpp"

using namespace defl;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail, double seconds) {
  if (!ok) ++failures;
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.1fs", seconds);
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << id << ' ' << name << ": " << detail << " (" << secs << ")"
            << std::endl;
}

template <typename F>
void criterion(int id, const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    std::ostringstream os;
    ok = body(os);
    detail = os.str();
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(id, name, ok, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::map<std::string, ExperimentSummary> run_rows(const std::string& scenario,
                                                  const std::vector<std::string>& labels = {}) {
  std::map<std::string, ExperimentSummary> out;
  for (const auto& row : scenario_table(scenario)) {
    if (!labels.empty() && std::find(labels.begin(), labels.end(), row.label) == labels.end()) continue;
    out.emplace(row.label + "/" + to_string(row.config.rule), run_experiment(row.config));
  }
  return out;
}

std::vector<double> ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = (i + j) / 2.0 + 1.0;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) { return pearson(ranks(a), ranks(b)); }

double population_std(const std::vector<double>& xs) {
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / xs.size());
}

}  // namespace

int main() {
  std::map<std::string, ExperimentSummary> attack;

  criterion(1, "robustness ordering", [&](std::ostream& os) {
    attack = run_rows("attack-sweep", {"none", "gaussian_0.03", "sign_flip_-2"});
    const double mk0 = attack.at("none/multi_krum").accuracy.mean;
    const double mk = attack.at("sign_flip_-2/multi_krum").accuracy.mean;
    const double fa0 = attack.at("none/fedavg").accuracy.mean;
    const double fa = attack.at("sign_flip_-2/fedavg").accuracy.mean;
    int contested = 0, poisoned = 0;
    for (const auto& r : attack.at("sign_flip_-2/multi_krum").runs) {
      contested += r.contested_rounds;
      poisoned += r.poisoned_selected;
    }
    os << "multi_krum " << mk << " vs clean " << mk0 << ", fedavg " << fa << " vs clean " << fa0
       << ", poisoned selected " << poisoned << "/" << contested;
    return mk >= 0.9 * mk0 && fa0 - fa >= 0.15;
  });

  criterion(2, "mild-attack parity", [&](std::ostream& os) {
    if (attack.empty()) attack = run_rows("attack-sweep", {"none", "gaussian_0.03"});
    const double clean = std::abs(attack.at("none/multi_krum").accuracy.mean - attack.at("none/fedavg").accuracy.mean);
    const double mild = std::abs(attack.at("gaussian_0.03/multi_krum").accuracy.mean -
                                 attack.at("gaussian_0.03/fedavg").accuracy.mean);
    os << "|multi_krum - fedavg| clean " << clean << ", gaussian 0.03 " << mild;
    return clean <= 0.03 && mild <= 0.03;
  });

  criterion(3, "byzantine-rate stability", [&](std::ostream& os) {
    std::vector<double> beta, mk, fa;
    for (const auto& row : scenario_table("byzantine-rate-sweep")) {
      const auto s = run_experiment(row.config);
      if (row.config.rule == AggregationRule::kMultiKrum) {
        mk.push_back(s.accuracy.mean);
      } else {
        fa.push_back(s.accuracy.mean);
        beta.push_back(row.config.attack.beta(row.config.system.n));
      }
    }
    const double sd = population_std(mk);
    const double rho = spearman(beta, fa);
    os << "multi_krum std " << sd << ", fedavg spearman " << rho;
    return sd <= 0.03 && rho <= -0.8;
  });

  criterion(4, "safety under faults", [&](std::ostream& os) {
    int bad = 0, stalls = 0;
    std::uint64_t timeouts = 0, comparisons = 0;
    for (int i = 0; i < 1000; ++i) {
      const std::uint64_t seed = 1000 + i;
      const int n = (i % 2) ? 9 : 6;
      ExperimentConfig c = default_config(n);
      c.task = {TaskKind::kQuadratic, 4, 20 * n, 10, 0, 1, 0};
      c.system.d = 4;
      c.system.rounds = 3;
      c.partition = PartitionKind::kIid;
      c.training.schedule.gamma0 = 1.5;
      c.training.batch_size = 10;
      const AttackKind kinds[] = {AttackKind::kWrongRoundUpd, AttackKind::kEarlyAgg, AttackKind::kCrash};
      const ConsensusFault faults[] = {ConsensusFault::kNone, ConsensusFault::kCrash, ConsensusFault::kEquivocate};
      c.attack.kind = kinds[(i / 2) % 3];
      c.attack.consensus = faults[(i / 6) % 3];
      c.attack.crash_round = (i / 18) % 3;
      for (int v = 0; static_cast<int>(c.attack.victims.size()) < c.system.f; ++v) {
        c.attack.victims.insert(static_cast<NodeId>((seed * 7 + v * 3) % n));
      }
      c.crash_time = static_cast<SimTime>((seed * 13) % 400);
      c.network.gst = static_cast<SimTime>((seed * 37) % 600);
      c.network.pre_gst_max = 60;
      c.network.drop_before_gst = true;
      c.network.drop_probability = 0.1;
      try {
        const auto r = run_once(c, seed);
        timeouts += r.view_timeouts;
        comparisons += r.aggregate_comparisons;
        if (!r.logs_consistent || !r.states_consistent || !r.violations.empty()) ++bad;
      } catch (const StallError&) {
        ++stalls;
      }
    }
    os << "1000 runs, " << bad << " with divergence, " << stalls << " stalled, " << timeouts << " view timeouts, "
       << comparisons << " aggregate cross-checks";
    return bad == 0 && stalls == 0;
  });

  criterion(5, "liveness after GST", [&](std::ostream& os) {
    int pass = 0;
    SimTime worst = 0;
    std::uint64_t uncommitted = 0;
    SimTime bound = 0;
    for (std::uint64_t s = 1; s <= 100; ++s) {
      ExperimentConfig c = default_config(6);
      c.task = {TaskKind::kQuadratic, 4, 120, 10, 0, 1, 0};
      c.system.d = 4;
      c.partition = PartitionKind::kIid;
      c.training.batch_size = 10;
      c.training.schedule.gamma0 = 1.5;
      c.system.rounds = 10;
      c.attack.consensus = ConsensusFault::kCrash;
      c.attack.victims = {1};
      c.network.gst = 10 * c.network.delta;
      c.network.pre_gst_max = 4 * c.network.delta;
      c.drain = 2 * c.view_timeout;
      bound = 2 * c.view_timeout;
      const auto r = run_once(c, s);
      pass += r.uncommitted == 0 && r.worst_commit_delay <= bound && r.violations.empty();
      worst = std::max(worst, r.worst_commit_delay);
      uncommitted += r.uncommitted;
    }
    os << pass << "/100 runs, worst commit delay " << worst << " (bound " << bound << "), " << uncommitted
       << " never committed";
    return pass == 100;
  });

  criterion(6, "storage bound", [&](std::ostream& os) {
    ExperimentConfig c = default_config(6);
    c.system.tau = 2;
    std::vector<std::uint64_t> peaks;
    for (int t : {20, 200}) {
      c.system.rounds = t;
      peaks.push_back(run_once(c, 1).pool_peak_bytes);
    }
    const std::uint64_t d = c.system.d, tau = c.system.tau, n = c.system.n;
    const std::uint64_t bound = 8 * d * tau * n + StoragePool::kEntryMetadataBytes * tau * n;
    os << "peak T=20 " << peaks[0] << ", T=200 " << peaks[1] << ", bound " << bound;
    return peaks[0] == peaks[1] && peaks[0] <= bound && peaks[0] > 0;
  });

  criterion(7, "network scaling", [&](std::ostream& os) {
    std::vector<double> xs, ys;
    for (const auto& row : scenario_table("scale-sweep")) {
      if (row.config.rule != AggregationRule::kMultiKrum) continue;
      xs.push_back(std::log(row.config.system.n));
      ys.push_back(std::log(run_experiment(row.config).bytes_received_total.mean));
    }
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    const double slope = sxy / sxx;
    os << "log-log slope " << slope;
    return slope >= 1.7 && slope <= 2.3;
  });

  criterion(8, "krum oracle equivalence", [&](std::ostream& os) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> grid(-2, 2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int mismatches = 0;
    double worst = 0;
    for (int trial = 0; trial < 10000; ++trial) {
      const int m = 3 + trial % 5;
      const int d = 1 + (trial / 5) % 3;
      const bool ties = trial % 2 == 0;
      std::vector<WeightVector> vs;
      std::vector<oracle::Vec> ov;
      for (int i = 0; i < m; ++i) {
        WeightVector w(d);
        for (int c = 0; c < d; ++c) w[c] = ties ? grid(rng) * 0.25 : gauss(rng);
        vs.push_back(w);
        ov.emplace_back(w.data(), w.data() + d);
      }
      std::vector<NodeId> owners(m);
      std::iota(owners.begin(), owners.end(), NodeId{0});
      std::shuffle(owners.begin(), owners.end(), rng);
      const int nb = 1 + static_cast<int>(rng() % (m - 1));
      const int k = 1 + static_cast<int>(rng() % m);
      AggregationParams p;
      p.k = k;
      p.neighborhood = nb;
      const auto want = oracle::select(ov, owners, nb, k);
      if (multi_krum_selection(vs, owners, p) != want) ++mismatches;
      if (krum_select(vs, owners, nb).owner != owners[want.front()]) ++mismatches;
      const auto mean = oracle::mean_of(ov, want);
      const WeightVector got = multi_krum(vs, owners, p);
      for (int c = 0; c < d; ++c) worst = std::max(worst, std::abs(got[c] - mean[static_cast<std::size_t>(c)]));
    }
    os << "10000 instances, " << mismatches << " selection mismatches, max mean error " << worst;
    return mismatches == 0 && worst <= 1e-12;
  });

  criterion(9, "convergence", [&](std::ostream& os) {
    ExperimentConfig c = default_config(6);
    c.system.f = 0;
    c.f_assumed = 0;
    c.partition = PartitionKind::kIid;
    c.task = {TaskKind::kQuadratic, 10, 1200, 10, 0, 1, 0};
    c.system.d = 10;
    c.training.batch_size = 40;
    c.training.schedule.gamma0 = 1.5;
    c.system.rounds = 200;
    int converged = 0;
    RoundId latest = 0;
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto r = run_once(c, seed);
      worst = std::max(worst, r.final_grad_norm());
      for (const auto& rec : r.records) {
        if (rec.grad_norm < 1e-3) {
          ++converged;
          latest = std::max(latest, rec.round);
          break;
        }
      }
    }
    os << converged << "/10 seeds below 1e-3, last first-hit round " << latest << ", worst final norm " << worst;
    return converged == 10;
  });

  criterion(10, "eta table", [&](std::ostream& os) {
    const bool exact = eta(6, 1) == std::sqrt(17.0);
    bool f0 = true;
    for (int n = 3; n <= 50; ++n) f0 = f0 && eta(n, 0) == std::sqrt(2.0 * n);
    bool matches = true;
    int steps = 0, decreasing = 0;
    std::string first;
    for (int f = 0; 2 * f + 3 < 50; ++f) {
      for (int n = 2 * f + 3; n < 50; ++n, ++steps) {
        matches = matches && std::abs(eta(n, f) - oracle::eta(n, f)) <= 1e-12 * oracle::eta(n, f);
        if (eta(n + 1, f) > eta(n, f)) continue;
        if (decreasing++ == 0) {
          std::ostringstream ex;
          ex << "eta(" << n + 1 << "," << f << ") = " << eta(n + 1, f) << " <= eta(" << n << "," << f
             << ") = " << eta(n, f);
          first = ex.str();
        }
      }
    }
    os << "eta(6,1) = sqrt(17) " << (exact ? "exact" : "off") << ", eta(n,0) = sqrt(2n) " << (f0 ? "exact" : "off")
       << ", " << decreasing << "/" << steps << " steps in n not increasing";
    if (decreasing) os << " (first: " << first << ")";
    return exact && f0 && matches && decreasing == 0;
  });

  criterion(11, "determinism", [&](std::ostream& os) {
    bool ok = true;
    std::size_t bytes = 0;
    for (const char* label : {"sign_flip_-2", "label_flip"}) {
      for (const auto& row : scenario_table("attack-sweep")) {
        if (row.label != label) continue;
        ExperimentConfig c = row.config;
        c.system.rounds = 10;
        const auto a = csv_text(run_once(c, 3).records);
        const auto b = csv_text(run_once(c, 3).records);
        ok = ok && a == b;
        bytes += a.size();
      }
    }
    os << "4 replayed pairs, " << bytes << " csv bytes, " << (ok ? "identical" : "different");
    return ok;
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
