#pragma once

#include <map>
#include <string>

#include "exitsim/attacks.hpp"
#include "exitsim/scenario.hpp"

namespace exitsim::harness {

inline constexpr const char* kObservationsFile = "observations.jsonl";
inline constexpr const char* kAttackerPeerFile = "attacker_peer.jsonl";
inline constexpr const char* kLedgerFile = "ledger.jsonl";
inline constexpr const char* kFindingsFile = "findings.jsonl";
inline constexpr const char* kProfilesFile = "profiles.jsonl";
inline constexpr const char* kReportJsonFile = "report.json";
inline constexpr const char* kReportCsvFile = "report.csv";

/// Config echo, metric rows, profiling accuracy and diagnostics. Wall-clock
/// time is left out so the document is a pure function of (config, seed).
std::string report_json(const RunResult& run);

/// Columns: attack, findings, unique_claims, precision, recall,
/// ambiguous_rate, runtime_ms. Undefined values print as N/A. Rows missing
/// from `runtime_ms` print N/A in that column.
std::string metrics_csv(const attacks::Scores& scores,
                        const std::map<attacks::AttackKind, std::string>& runtime_ms);
std::string metrics_csv(const attacks::Scores& scores);

/// Writes the seven output files into `dir`, creating it if needed.
void write_outputs(const RunResult& run, const std::string& dir);

struct Rescored {
  attacks::Scores scores;
  /// Carried over from an existing report.csv, when there is one.
  std::map<attacks::AttackKind, std::string> runtime_ms;
};

/// Recomputes the metrics from findings.jsonl, profiles.jsonl, ledger.jsonl
/// and the config echo in report.json.
Rescored rescore_directory(const std::string& dir);

}  // namespace exitsim::harness
