#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exitsim/actors.hpp"
#include "exitsim/attacks.hpp"
#include "exitsim/config.hpp"
#include "exitsim/dht.hpp"
#include "exitsim/ledger.hpp"
#include "exitsim/onion.hpp"

namespace exitsim::harness {

// Synthetic address plan. The ranges are pairwise disjoint.
inline constexpr net::Ipv4Range kClientRange{net::Ipv4(198, 18, 0, 0), 15};
inline constexpr net::Ipv4Range kWebRange{net::Ipv4(100, 64, 0, 0), 16};
inline constexpr net::Ipv4Range kSeederRange{net::Ipv4(100, 65, 0, 0), 16};
inline constexpr net::Ipv4Range kDhtRange{net::Ipv4(10, 0, 0, 0), 16};
inline constexpr net::Ipv4Range kAttackerRange{net::Ipv4(203, 0, 113, 0), 24};
inline constexpr net::Endpoint kTrackerEndpoint{net::Ipv4(192, 0, 2, 1), 6969};
inline constexpr net::Endpoint kAttackerPeerEndpoint{net::Ipv4(203, 0, 113, 66), 6889};
inline constexpr net::Endpoint kProberEndpoint{net::Ipv4(203, 0, 113, 67), 6881};
inline constexpr std::uint16_t kDhtPort = 6881;
inline constexpr std::uint16_t kSeederPort = 6881;
inline constexpr SimTime kDhtRefreshPeriod = seconds(900);

struct Seeder {
  btproto::InfoHash info_hash;
  btproto::PeerId peer_id;
  net::Endpoint endpoint;
};

struct Population {
  onion::Directory directory;
  std::vector<onion::RelayId> exits;  // exit index -> relay id
  std::vector<btproto::InfoHash> catalog;
  std::vector<double> popularity;     // Zipf weights, catalog order
  std::vector<Seeder> seeders;
  std::vector<net::Endpoint> web_hosts;
  std::vector<actors::ClientProfile> clients;
};

/// Deterministic under config.seed. Throws InvalidConfig.
Population generate_population(const ScenarioConfig& config);
/// Text dump of everything generated, for determinism checks.
std::string dump_population(const Population& population);

struct RunDiagnostics {
  std::size_t events = 0;
  std::size_t observations = 0;
  std::size_t attacker_peer_entries = 0;
  std::size_t ledger_records = 0;
  std::size_t hop_records = 0;
  std::size_t privacy_violations = 0;
  std::size_t circuits = 0;
  std::size_t streams = 0;
  attacks::PayloadDiagnostics payload;
  attacks::DhtDiagnostics dht;
  std::size_t prober_lookups = 0;
  actors::ClientStats clients;
};

struct RunOptions {
  /// Keep per-hop records and audit them after the run.
  bool audit_privacy = true;
};

struct RunResult {
  ScenarioConfig config;
  std::vector<actors::ClientProfile> clients;
  std::vector<onion::ExitObservation> observations;
  std::vector<actors::AttackerPeerEntry> attacker_log;
  GroundTruthLedger ledger;
  std::vector<attacks::Finding> findings;
  std::vector<attacks::BrowsingProfile> profiles;
  attacks::Scores scores;
  RunDiagnostics diagnostics;
  std::vector<onion::PrivacyViolation> privacy_violations;
  /// Every DHT node's peer store at the end of the run.
  std::vector<dht::PeerStoreEntry> dht_store;
  std::map<onion::CircuitId, onion::Circuit> circuits;
  std::vector<onion::RelayId> instrumented_relays;
  double wall_ms = 0.0;
};

/// Event loop to `duration`, then the enabled attacks, then scoring.
/// Module errors escape as EventError naming the event.
RunResult run_scenario(const ScenarioConfig& config, RunOptions options = {});

}  // namespace exitsim::harness
