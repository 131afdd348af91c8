#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitsim/attacks.hpp"
#include "exitsim/sim_time.hpp"

namespace exitsim::harness {

inline constexpr int kSchemaVersion = 1;

/// Carries every field-level problem found, one per line.
class InvalidConfig : public std::runtime_error {
 public:
  explicit InvalidConfig(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct UsageMix {
  double tracker_via_tor = 0.4;
  double peers_via_tor = 0.3;
  double both = 0.3;

  friend bool operator==(const UsageMix&, const UsageMix&) = default;
};

struct AttackerConfig {
  /// Exit indices (0-based among exits). nullopt means every exit.
  std::optional<std::vector<std::uint32_t>> instrumented_exits;
  attacks::RewritePolicy rewrite_policy = attacks::RewritePolicy::ReplaceAll;
  SimTime linkage_window = attacks::kDefaultLinkageWindow;
  bool payload_enabled = true;
  bool hijack_enabled = true;
  bool prober_enabled = true;
  bool profile_include_ambiguous = false;
  bool include_payload_in_headline = false;

  friend bool operator==(const AttackerConfig&, const AttackerConfig&) = default;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  SimTime duration = seconds(600);

  std::uint32_t guards = 12;
  std::uint32_t middles = 12;
  std::uint32_t exits = 6;

  std::uint32_t clients = 50;
  UsageMix usage;
  double announce_includes_ip = 0.1;
  double exthandshake_includes_ip = 0.1;
  double dht_enabled = 0.6;
  std::uint32_t torrents_per_client = 2;
  /// Listen ports are drawn from here when non-empty, else from 1025..65535.
  std::vector<std::uint16_t> port_pool;
  /// Draw listen ports without replacement.
  bool unique_ports = false;

  std::uint32_t catalog_size = 100;
  double zipf_s = 1.0;

  AttackerConfig attacker;

  SimTime announce_period = seconds(120);
  std::uint32_t web_hosts = 40;
  double web_visits_per_hour = 6.0;
  std::uint32_t dht_nodes = 64;
  std::uint32_t max_peer_connections = 8;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// Parses and validates. Unknown keys are errors.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::string& path);
/// Throws InvalidConfig listing every violated invariant.
void validate(const ScenarioConfig& config);
/// Canonical JSON form; parse_config(to_json(c)) == c.
std::string to_json(const ScenarioConfig& config, int indent = 2);

/// Resolved instrumented exit indices.
std::vector<std::uint32_t> instrumented_exit_indices(const ScenarioConfig& config);

enum class Preset { TrackerOnly, PeersViaTor, Mixed };
std::optional<Preset> preset_from_string(std::string_view s);
ScenarioConfig preset(Preset p, std::uint64_t seed);

}  // namespace exitsim::harness
