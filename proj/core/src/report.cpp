#include "exitsim/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "exitsim/jsonl.hpp"
#include "json.hpp"

namespace exitsim::harness {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string ratio_cell(const std::optional<double>& v) { return v ? fixed(*v, 4) : "N/A"; }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <typename Range>
std::string jsonl(const Range& items) {
  std::string out;
  for (const auto& item : items) {
    out += to_line(item);
    out += '\n';
  }
  return out;
}

}  // namespace

std::string report_json(const RunResult& run) {
  json rows = json::array();
  for (const auto& r : run.scores.rows) {
    rows.push_back({{"attack", attacks::to_string(r.attack)},
                    {"findings", r.findings},
                    {"unique_claims", r.unique_claims},
                    {"correct_unique", r.correct_unique},
                    {"precision", optional_number(r.precision)},
                    {"vulnerable_clients", r.vulnerable_clients},
                    {"deanonymized_clients", r.deanonymized_clients},
                    {"recall", optional_number(r.recall)},
                    {"ambiguous", r.ambiguous},
                    {"ambiguous_contains_truth", r.ambiguous_contains_truth},
                    {"ambiguous_rate", optional_number(r.ambiguous_rate)},
                    {"headline", r.headline}});
  }
  const auto& d = run.diagnostics;
  json diagnostics = {
      {"events", d.events},
      {"observations", d.observations},
      {"attacker_peer_entries", d.attacker_peer_entries},
      {"ledger_records", d.ledger_records},
      {"circuits", d.circuits},
      {"streams", d.streams},
      {"hop_records", d.hop_records},
      {"privacy_violations", d.privacy_violations},
      {"payloads_inspected", d.payload.inspected},
      {"unparsed_payloads", d.payload.unparsed},
      {"dht_pairs", d.dht.pairs},
      {"skipped_lookups", d.dht.skipped_lookups},
      {"dht_pairs_without_match", d.dht.no_match},
      {"prober_lookups", d.prober_lookups},
      {"announces", d.clients.announces},
      {"peer_attempts", d.clients.peer_attempts},
      {"peer_connected", d.clients.peer_connected},
      {"dht_announces", d.clients.dht_announces},
      {"dht_failures", d.clients.dht_failures},
      {"web_requests", d.clients.web_requests},
      {"unparsed_responses", d.clients.unparsed_responses},
  };
  json root = json::object();
  root["schema"] = kSchemaVersion;
  root["config"] = json::parse(to_json(run.config));
  root["metrics"] = rows;
  root["profiling"] = {{"profiles", run.profiles.size()},
                       {"attributed_web_streams", run.scores.attributed_web_streams},
                       {"correct_web_streams", run.scores.correct_web_streams},
                       {"accuracy", optional_number(run.scores.profile_accuracy)}};
  root["headline_deanonymized_ips"] = run.scores.headline_deanonymized_ips;
  root["diagnostics"] = diagnostics;
  return root.dump(2) + "\n";
}

std::string metrics_csv(const attacks::Scores& scores,
                        const std::map<attacks::AttackKind, std::string>& runtime_ms) {
  std::string out = "attack,findings,unique_claims,precision,recall,ambiguous_rate,runtime_ms\n";
  for (const auto& r : scores.rows) {
    auto rt = runtime_ms.find(r.attack);
    out += attacks::to_string(r.attack);
    out += ',' + std::to_string(r.findings);
    out += ',' + std::to_string(r.unique_claims);
    out += ',' + ratio_cell(r.precision);
    out += ',' + ratio_cell(r.recall);
    out += ',' + ratio_cell(r.ambiguous_rate);
    out += ',' + (rt == runtime_ms.end() ? std::string("N/A") : rt->second);
    out += '\n';
  }
  return out;
}

std::string metrics_csv(const attacks::Scores& scores) {
  std::map<attacks::AttackKind, std::string> runtime;
  for (const auto& r : scores.rows) runtime[r.attack] = fixed(r.runtime_ms, 3);
  return metrics_csv(scores, runtime);
}

void write_outputs(const RunResult& run, const std::string& dir) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  write_file(root / kObservationsFile, jsonl(run.observations));
  write_file(root / kAttackerPeerFile, jsonl(run.attacker_log));
  write_file(root / kLedgerFile, jsonl(run.ledger.records()));
  write_file(root / kFindingsFile, jsonl(run.findings));
  write_file(root / kProfilesFile, jsonl(run.profiles));
  write_file(root / kReportJsonFile, report_json(run));
  write_file(root / kReportCsvFile, metrics_csv(run.scores));
}

Rescored rescore_directory(const std::string& dir) {
  const std::filesystem::path root(dir);
  auto path = [&](const char* name) { return (root / name).string(); };

  std::vector<attacks::Finding> findings;
  for (const auto& line : read_lines(path(kFindingsFile))) findings.push_back(finding_from_line(line));
  std::vector<attacks::BrowsingProfile> profiles;
  for (const auto& line : read_lines(path(kProfilesFile))) profiles.push_back(profile_from_line(line));
  GroundTruthLedger ledger;
  for (const auto& line : read_lines(path(kLedgerFile))) ledger.append(ledger_record_from_line(line));

  attacks::ScoreOptions options;
  bool empty_population = false;
  {
    std::ifstream in(path(kReportJsonFile), std::ios::binary);
    if (!in) throw JsonlError("cannot read " + path(kReportJsonFile));
    json report;
    try {
      report = json::parse(in);
      const ScenarioConfig config = parse_config(report.at("config").dump());
      options.include_payload_in_headline = config.attacker.include_payload_in_headline;
      empty_population = config.clients == 0;
    } catch (const json::exception& e) {
      throw JsonlError(std::string("report.json: ") + e.what());
    }
  }

  Rescored out;
  out.scores = attacks::score_findings(findings, profiles, ledger, options);
  if (empty_population) out.scores.rows.clear();

  std::ifstream csv(path(kReportCsvFile), std::ios::binary);
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    const auto first = line.find(',');
    const auto last = line.rfind(',');
    if (first == std::string::npos) continue;
    if (auto attack = attacks::attack_from_string(line.substr(0, first))) {
      out.runtime_ms[*attack] = line.substr(last + 1);
    }
  }
  return out;
}

}  // namespace exitsim::harness
