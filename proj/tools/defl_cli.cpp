#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "defl/harness.hpp"

namespace fs = std::filesystem;
using namespace defl;

namespace {

int cmd_run(const std::string& config_path, std::uint64_t seed, const std::string& out) {
  const ExperimentConfig config = load_config(config_path);
  validate_experiment(config);
  const RunResult run = run_once(config, seed);
  emit_csv(run.records, out);
  for (const auto& v : run.violations) std::cerr << "invariant violated: " << v << '\n';
  std::printf("%s seed=%llu rounds=%zu accuracy=%.4f bytes_received=%llu pool_peak=%llu\n", config.name.c_str(),
              static_cast<unsigned long long>(seed), run.records.size(), run.final_accuracy(),
              static_cast<unsigned long long>(run.network.total_received()),
              static_cast<unsigned long long>(run.pool_peak_bytes));
  return run.violations.empty() ? 0 : 3;
}

int cmd_scenario(const std::string& name, const std::string& out_dir) {
  const auto rows = scenario_table(name);
  fs::create_directories(out_dir);
  std::FILE* summary = std::fopen((fs::path(out_dir) / "summary.csv").c_str(), "w");
  if (!summary) throw std::runtime_error("cannot write summary.csv in " + out_dir);
  std::fprintf(summary, "row,rule,attack,beta,n,accuracy_mean,accuracy_std,bytes_received_mean,pool_peak_mean\n");
  bool clean = true;
  for (const auto& row : rows) {
    const auto result = run_experiment(row.config);
    std::vector<RunRecord> records;
    for (const auto& run : result.runs) {
      records.insert(records.end(), run.records.begin(), run.records.end());
      clean = clean && run.violations.empty();
    }
    std::string file = row.label + "_" + to_string(row.config.rule) + ".csv";
    for (auto& ch : file) {
      if (ch == '+' || ch == '=') ch = '_';
    }
    emit_csv(records, fs::path(out_dir) / file);
    std::fprintf(summary, "%s,%s,%s,%.6g,%d,%.6g,%.6g,%.6g,%.6g\n", row.label.c_str(),
                 to_string(row.config.rule).c_str(), to_string(row.config.attack.kind).c_str(),
                 row.config.attack.beta(row.config.system.n), row.config.system.n, result.accuracy.mean,
                 result.accuracy.std, result.bytes_received_total.mean, result.pool_peak_bytes.mean);
    std::printf("%-40s accuracy %.4f +- %.4f\n", row.config.name.c_str(), result.accuracy.mean, result.accuracy.std);
    std::fflush(stdout);
  }
  std::fclose(summary);
  return clean ? 0 : 3;
}

int cmd_validate(const std::string& config_path) {
  const ExperimentConfig config = load_config(config_path);
  validate_experiment(config);
  std::printf("ok: %s (n=%d, f=%d, f_assumed=%d, rule=%s, attack=%s)\n", config.name.c_str(), config.system.n,
              config.system.f, config.f_assumed, to_string(config.rule).c_str(),
              to_string(config.attack.kind).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, out, name, out_dir;
  std::uint64_t seed = 1;

  auto* run = app.add_subcommand("run", "Run one configuration with one seed and write per-round CSV");
  run->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Run seed")->required();
  run->add_option("--out", out, "Output CSV path")->required();

  auto* scenario = app.add_subcommand("scenario", "Run a predefined grid over every configured seed");
  scenario->add_option("--name", name, "Scenario name")
      ->required()
      ->check(CLI::IsMember(scenario_names()));
  scenario->add_option("--out-dir", out_dir, "Directory for CSV output")->required();

  auto* validate = app.add_subcommand("validate", "Check a config against the system bounds");
  validate->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed, out);
    if (scenario->parsed()) return cmd_scenario(name, out_dir);
    if (validate->parsed()) return cmd_validate(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const StallError& e) {
    std::cerr << "stalled: " << e.what() << '\n';
    for (const auto& line : e.trace) std::cerr << "  " << line << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
