#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitsim/actors.hpp"
#include "exitsim/btproto.hpp"
#include "exitsim/dht.hpp"
#include "exitsim/ledger.hpp"
#include "exitsim/onion.hpp"

// De-anonymization analyses run from the attacker's own vantage: instrumented
// exit logs, the attacker-controlled peer's connection log and DHT lookups.
// Only score_findings() touches the ground-truth ledger.
namespace exitsim::attacks {

using btproto::InfoHash;
using btproto::PeerEndpoint;
using onion::CircuitId;
using onion::ExitObservation;
using onion::StreamId;

enum class AttackKind { Payload, Hijack, Dht, Profile };
enum class Confidence { VerifiedTransport, UnverifiedSelfReport, Ambiguous };

const char* to_string(AttackKind a);
const char* to_string(Confidence c);
std::optional<AttackKind> attack_from_string(std::string_view s);
std::optional<Confidence> confidence_from_string(std::string_view s);

struct Evidence {
  std::vector<std::uint64_t> observations;
  std::vector<std::uint64_t> peer_log_entries;
  std::vector<PeerEndpoint> dht_snapshot;
  std::optional<InfoHash> info_hash;
  std::optional<std::uint16_t> port;

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

struct Finding {
  std::uint64_t id = 0;
  AttackKind attack = AttackKind::Payload;
  CircuitId circuit = 0;
  std::vector<StreamId> streams;
  /// Set for unique claims; empty for AMBIGUOUS.
  std::optional<net::Ipv4> claimed_ip;
  /// Every address the evidence allows (one entry for unique claims).
  std::vector<net::Ipv4> candidates;
  Confidence confidence = Confidence::VerifiedTransport;
  Evidence evidence;

  bool unique_claim() const { return claimed_ip.has_value(); }
  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ProfileVisit {
  SimTime time = 0;
  net::Endpoint host;
  CircuitId circuit = 0;
  StreamId stream = 0;
  std::uint64_t observation = 0;

  friend bool operator==(const ProfileVisit&, const ProfileVisit&) = default;
};

struct BrowsingProfile {
  net::Ipv4 claimed_ip;
  std::vector<ProfileVisit> visits;
  std::vector<std::uint64_t> source_findings;

  friend bool operator==(const BrowsingProfile&, const BrowsingProfile&) = default;
};

// ---------------------------------------------------------------------------
// attacker capabilities

using Observations = std::span<const ExitObservation>;
using PeerLog = std::span<const actors::AttackerPeerEntry>;

/// Public relay addresses, as anyone can read them from the directory.
class RelayAddressBook {
 public:
  explicit RelayAddressBook(const onion::Directory& directory);
  bool is_relay(net::Ipv4 ip) const { return addresses_.count(ip) != 0; }

 private:
  std::set<net::Ipv4> addresses_;
};

/// The attacker's DHT client, querying from its own public address.
class DhtProber {
 public:
  DhtProber(dht::DhtNetwork& network, net::Endpoint self) : network_(network), self_(self) {}
  /// Throws dht::DhtError(LookupFailed) when the DHT is unreachable.
  std::set<PeerEndpoint> get_peers(const InfoHash& h, SimTime now) {
    ++lookups_;
    return network_.get_peers(self_, h, now);
  }
  std::size_t lookups() const { return lookups_; }

 private:
  dht::DhtNetwork& network_;
  net::Endpoint self_;
  std::size_t lookups_ = 0;
};

/// Assigns sequential finding ids across all attacks of one run.
class FindingIds {
 public:
  std::uint64_t next() { return next_++; }

 private:
  std::uint64_t next_ = 1;
};

// ---------------------------------------------------------------------------
// payload inspection

struct PayloadDiagnostics {
  std::size_t inspected = 0;
  std::size_t unparsed = 0;
};

/// Reports every self-reported address (`ip=`, "yourip", "ipv4") found in
/// outbound BitTorrent control messages. These are unverified by nature.
std::vector<Finding> attack_payload_inspection(Observations observations, FindingIds& ids,
                                               PayloadDiagnostics* diag = nullptr);

// ---------------------------------------------------------------------------
// tracker-response hijack

enum class RewritePolicy { ReplaceAll, Prepend };

const char* to_string(RewritePolicy p);
std::optional<RewritePolicy> rewrite_policy_from_string(std::string_view s);

/// Exit hook replacing (or extending) the peer list of every tracker
/// response with `attacker`. Other payloads pass untouched.
onion::Rewriter make_peer_list_rewriter(PeerEndpoint attacker, RewritePolicy policy);

inline constexpr SimTime kDefaultLinkageWindow = seconds(60);

/// Joins direct connections at the attacker peer with exit-observed announces
/// on (info_hash, peer_id), taking the latest announce within `window`.
/// Connections arriving from relay addresses came through the overlay and
/// reveal nothing.
std::vector<Finding> attack_hijack(Observations observations, PeerLog peer_log,
                                   const RelayAddressBook& relays, FindingIds& ids,
                                   SimTime window = kDefaultLinkageWindow);

// ---------------------------------------------------------------------------
// DHT port match

/// One attacker-visible (info_hash, listen port) pair and where it was seen.
struct ObservedPair {
  CircuitId circuit = 0;
  InfoHash info_hash;
  std::uint16_t port = 0;
  std::vector<std::uint64_t> observations;
  std::vector<StreamId> streams;
};

/// Pairs from outbound announces (`port=`) and outbound extended handshakes
/// ("p", with the info-hash from the preceding handshake), grouped per circuit.
std::vector<ObservedPair> extract_observed_pairs(Observations observations);

struct DhtDiagnostics {
  std::size_t pairs = 0;
  std::size_t skipped_lookups = 0;
  std::size_t no_match = 0;
};

std::vector<Finding> attack_dht(Observations observations, DhtProber& prober, SimTime now,
                                FindingIds& ids, DhtDiagnostics* diag = nullptr);

// ---------------------------------------------------------------------------
// multiplexed-stream profiling

struct ProfileOptions {
  bool include_ambiguous = false;
};

/// True for an HTTP request line, the attacker's marker for web traffic.
bool is_web_request(BytesView payload);

/// Attributes web streams sharing a circuit with a verified finding to that
/// finding's address. Circuits with conflicting verified claims are skipped.
std::vector<BrowsingProfile> attack_profile_multiplexed(std::span<const Finding> findings,
                                                        Observations observations,
                                                        ProfileOptions options = {});

// ---------------------------------------------------------------------------
// scoring

class ScoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricRow {
  AttackKind attack = AttackKind::Payload;
  std::size_t findings = 0;
  std::size_t unique_claims = 0;
  std::size_t correct_unique = 0;
  std::optional<double> precision;
  std::size_t vulnerable_clients = 0;
  std::size_t deanonymized_clients = 0;
  std::optional<double> recall;
  std::size_t ambiguous = 0;
  std::size_t ambiguous_contains_truth = 0;
  std::optional<double> ambiguous_rate;
  bool headline = true;
  double runtime_ms = 0.0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct ScoreOptions {
  bool include_payload_in_headline = false;
};

struct Scores {
  std::vector<MetricRow> rows;  // PAYLOAD, HIJACK, DHT, PROFILE
  std::size_t attributed_web_streams = 0;
  std::size_t correct_web_streams = 0;
  std::optional<double> profile_accuracy;
  /// Distinct client addresses correctly claimed by headline attacks.
  std::size_t headline_deanonymized_ips = 0;

  const MetricRow& row(AttackKind a) const;
};

/// Precision over unique claims, recall over clients exposed to each attack,
/// ambiguous candidate-set hit rate, and profile attribution accuracy.
/// Throws ScoreError when a finding names a circuit the ledger never saw.
Scores score_findings(std::span<const Finding> findings, std::span<const BrowsingProfile> profiles,
                      const harness::GroundTruthLedger& ledger, ScoreOptions options = {});

}  // namespace exitsim::attacks
