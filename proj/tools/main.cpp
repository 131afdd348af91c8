// exitsim command-line front end.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "exitsim/config.hpp"
#include "exitsim/engine.hpp"
#include "exitsim/inspect.hpp"
#include "exitsim/jsonl.hpp"
#include "exitsim/report.hpp"
#include "exitsim/scenario.hpp"

namespace {

using namespace exitsim;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitScenario = 3;

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<std::uint32_t> clients;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  bool no_audit = false;
};

int cmd_run(const RunArgs& a) {
  harness::ScenarioConfig config = harness::load_config(a.config);
  if (a.clients) config.clients = *a.clients;
  if (a.duration) {
    if (!std::isfinite(*a.duration) || *a.duration < 0) {
      throw harness::InvalidConfig({"--duration: must be a non-negative number of seconds"});
    }
    config.duration = static_cast<SimTime>(std::llround(*a.duration * kMillisPerSecond));
  }
  if (a.seed) config.seed = *a.seed;
  harness::validate(config);

  harness::RunOptions options;
  options.audit_privacy = !a.no_audit;
  const auto run = harness::run_scenario(config, options);
  harness::write_outputs(run, a.out);

  std::cout << harness::metrics_csv(run.scores);
  std::cout << "profile accuracy: "
            << (run.scores.profile_accuracy ? std::to_string(*run.scores.profile_accuracy) : "N/A")
            << "\nheadline de-anonymized IPs: " << run.scores.headline_deanonymized_ips
            << "\nprivacy violations: " << run.diagnostics.privacy_violations
            << "\nwall clock: " << static_cast<long long>(run.wall_ms) << " ms\n"
            << "outputs written to " << a.out << "\n";
  return run.privacy_violations.empty() ? kExitOk : kExitScenario;
}

int cmd_gen(const std::string& name, std::uint64_t seed, const std::string& out) {
  auto preset = harness::preset_from_string(name);
  if (!preset) {
    std::cerr << "unknown preset '" << name << "' (tracker-only, peers-via-tor, mixed)\n";
    return kExitUsage;
  }
  const std::string text = harness::to_json(harness::preset(*preset, seed)) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream file(out, std::ios::binary);
    if (!file) {
      std::cerr << "cannot write " << out << "\n";
      return kExitScenario;
    }
    file << text;
  }
  return kExitOk;
}

int cmd_inspect(const std::string& path, const std::string& format) {
  const auto fixture = harness::load_fixture(path);
  const auto inspection =
      harness::inspect_frame(fixture.bytes, format.empty() ? fixture.format : format);
  std::cout << harness::render(inspection);
  return inspection.kind == "error" ? kExitScenario : kExitOk;
}

int cmd_report(const std::string& dir) {
  const auto rescored = harness::rescore_directory(dir);
  std::cout << harness::metrics_csv(rescored.scores, rescored.runtime_ms);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate BitTorrent over an onion-routing overlay and score exit-node attacks"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run a scenario and write all artifacts");
  run->add_option("config", run_args.config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_args.out, "Output directory")->required();
  run->add_option("--clients", run_args.clients, "Override the client count");
  run->add_option("--duration", run_args.duration, "Override the duration (simulated seconds)");
  run->add_option("--seed", run_args.seed, "Override the seed");
  run->add_flag("--no-audit", run_args.no_audit, "Skip per-hop records and the privacy audit");

  std::string preset_name;
  std::uint64_t preset_seed = 1;
  std::string preset_out;
  auto* gen = app.add_subcommand("gen-scenario", "Print a preset scenario config");
  gen->add_option("--preset", preset_name, "tracker-only | peers-via-tor | mixed")->required();
  gen->add_option("--seed", preset_seed, "Seed to embed");
  gen->add_option("--out", preset_out, "Write to a file instead of stdout");

  std::string fixture_path;
  std::string fixture_format;
  auto* inspect = app.add_subcommand("inspect-fixture", "Pretty-print a hex wire fixture");
  inspect->add_option("file", fixture_path, "Hex fixture")->required()->check(CLI::ExistingFile);
  inspect->add_option("--format", fixture_format, "Force a decoder");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Re-score a run directory and print the metrics");
  report->add_option("dir", report_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*gen) return cmd_gen(preset_name, preset_seed, preset_out);
    if (*inspect) return cmd_inspect(fixture_path, fixture_format);
    if (*report) return cmd_report(report_dir);
  } catch (const harness::InvalidConfig& e) {
    std::cerr << e.what() << "\n";
    return kExitScenario;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitScenario;
  }
  return kExitUsage;
}
