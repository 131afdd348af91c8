#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "exitsim/btproto.hpp"
#include "exitsim/dht.hpp"
#include "exitsim/ledger.hpp"
#include "exitsim/net.hpp"
#include "exitsim/onion.hpp"
#include "exitsim/sim_time.hpp"

// Traffic generators with known ground truth: BitTorrent clients, the
// tracker, swarm seeders, web servers and the attacker-controlled peer.
namespace exitsim::actors {

using btproto::InfoHash;
using btproto::PeerEndpoint;
using btproto::PeerId;
using onion::ClientId;

enum class UsageMode { TrackerViaTor, PeersViaTor, Both };

const char* to_string(UsageMode m);
std::optional<UsageMode> usage_mode_from_string(std::string_view s);

inline constexpr SimTime kDefaultAnnouncePeriod = seconds(120);
inline constexpr std::size_t kDefaultMaxPeerConnections = 8;
inline constexpr std::uint16_t kMinListenPort = 1025;
inline constexpr std::uint16_t kMaxListenPort = 65535;

struct WebTarget {
  net::Endpoint host;
  std::vector<SimTime> visits;
};

struct ClientProfile {
  ClientId id = 0;
  net::Ipv4 public_ip;
  UsageMode usage_mode = UsageMode::Both;
  bool announce_includes_ip = false;
  bool exthandshake_includes_ip = false;
  bool dht_enabled = false;
  std::uint16_t listen_port = 6881;
  PeerId peer_id;
  std::vector<InfoHash> torrents;
  std::vector<WebTarget> web_targets;
  SimTime announce_period = kDefaultAnnouncePeriod;
  SimTime start_offset = 0;

  bool tracker_via_overlay() const { return usage_mode != UsageMode::PeersViaTor; }
  bool peers_via_overlay() const { return usage_mode != UsageMode::TrackerViaTor; }
};

// ---------------------------------------------------------------------------

/// Direct (non-overlay) reachability: who listens where.
class Internet {
 public:
  void listen(const net::Endpoint& at, onion::Responder handler);
  bool listening(const net::Endpoint& at) const { return listeners_.count(at) != 0; }

  /// nullopt when nobody listens at `to` or the listener refuses.
  std::optional<Bytes> deliver(net::Ipv4 from, const net::Endpoint& to, BytesView payload,
                               SimTime now) const;

  /// Responder that routes whatever an exit hands it onward.
  onion::Responder as_responder() const;

 private:
  std::unordered_map<net::Endpoint, onion::Responder> listeners_;
};

// ---------------------------------------------------------------------------

class TrackerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tracker {
 public:
  struct Options {
    std::int64_t interval_seconds = 120;
    std::size_t default_numwant = 50;
    bool closed_catalog = false;
  };

  struct SwarmMember {
    PeerId peer_id;
    PeerEndpoint endpoint;
    SimTime last_seen = 0;
  };

  Tracker() = default;
  explicit Tracker(Options options) : options_(options) {}

  void add_to_catalog(const InfoHash& h) { catalog_.insert(h); }

  /// Registers the announcer and returns up to numwant other members. The
  /// registered address is `source` unless the request carries `ip=`.
  btproto::AnnounceResponse serve(const btproto::AnnounceRequest& request, net::Ipv4 source,
                                  SimTime now);

  /// Wire-level wrapper: query string in, bencoded body out. Errors become a
  /// "failure reason" response.
  Bytes handle(BytesView query, net::Ipv4 source, SimTime now);

  const std::vector<SwarmMember>& swarm(const InfoHash& h) const;

 private:
  Options options_;
  std::set<InfoHash> catalog_;
  std::map<InfoHash, std::vector<SwarmMember>> swarms_;
};

// ---------------------------------------------------------------------------

/// Answers a peer-wire opening with its own handshake and extended handshake.
class PeerListener {
 public:
  PeerListener(PeerId id, std::uint16_t listen_port, std::string version);
  std::optional<Bytes> respond(const onion::Delivery& delivery) const;

 private:
  PeerId id_;
  std::uint16_t listen_port_;
  std::string version_;
};

struct AttackerPeerEntry {
  std::uint64_t id = 0;
  SimTime time = 0;
  net::Ipv4 source;  // transport-level source of the connection
  InfoHash info_hash;
  PeerId peer_id;
};

class AttackerPeer {
 public:
  AttackerPeer(PeerEndpoint endpoint, PeerId id);

  const PeerEndpoint& endpoint() const { return endpoint_; }
  const std::vector<AttackerPeerEntry>& log() const { return log_; }

  std::optional<Bytes> respond(const onion::Delivery& delivery);

 private:
  PeerEndpoint endpoint_;
  PeerListener listener_;
  std::vector<AttackerPeerEntry> log_;
};

/// Minimal HTTP responder for web hosts.
std::optional<Bytes> web_respond(const onion::Delivery& delivery);
Bytes build_web_request(const net::Endpoint& host, std::string_view path);

// ---------------------------------------------------------------------------

/// Ground-truth knowledge used only to tag ledger records with what each
/// message exposes. The attacks never see this.
struct ExposureModel {
  std::set<onion::RelayId> instrumented_exits;
  bool hijack_active = false;
};

/// Everything a client acts upon during one step.
struct World {
  onion::Overlay& overlay;
  Internet& internet;
  dht::DhtNetwork& dht;
  harness::GroundTruthLedger& ledger;
  PeerEndpoint tracker;
  ExposureModel exposure;
  std::size_t max_peer_connections = kDefaultMaxPeerConnections;
};

struct ClientStats {
  std::size_t announces = 0;
  std::size_t peer_attempts = 0;
  std::size_t peer_connected = 0;
  std::size_t dht_announces = 0;
  std::size_t dht_failures = 0;
  std::size_t web_requests = 0;
  std::size_t unparsed_responses = 0;
};

class Client {
 public:
  explicit Client(ClientProfile profile);

  const ClientProfile& profile() const { return profile_; }
  const ClientStats& stats() const { return stats_; }

  /// Announces one torrent and connects to what comes back.
  void announce(World& world, std::size_t torrent, SimTime now);
  void connect_peers(World& world, const InfoHash& h, const std::vector<PeerEndpoint>& peers,
                     SimTime now);
  /// Tries the overlay first; UDP cannot cross it, so every announce ends up
  /// on the public interface.
  void dht_maintenance(World& world, SimTime now);
  void browse(World& world, const WebTarget& target, SimTime now);

  /// The opening bytes this client writes on a new peer connection.
  Bytes peer_wire_opening(const InfoHash& h) const;
  btproto::AnnounceRequest announce_request(const InfoHash& h) const;

  PeerListener listener() const;

 private:
  struct Sent {
    bool connected = false;
    Bytes reply;
  };
  Sent send(World& world, bool via_overlay, harness::ActionKind kind, harness::Application app,
            const net::Endpoint& destination, Bytes payload, std::uint8_t exposes_if_seen,
            SimTime now);

  ClientProfile profile_;
  ClientStats stats_;
  std::map<InfoHash, std::set<PeerEndpoint>> contacted_;
  std::set<InfoHash> started_;
};

}  // namespace exitsim::actors
