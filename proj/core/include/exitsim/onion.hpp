#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "exitsim/bytes.hpp"
#include "exitsim/net.hpp"
#include "exitsim/rng.hpp"
#include "exitsim/sim_time.hpp"

// Onion-routing overlay: relays, three-hop circuits, per-window stream
// multiplexing, layered sealing and exit instrumentation.
namespace exitsim::onion {

using RelayId = std::uint32_t;
using CircuitId = std::uint64_t;
using StreamId = std::uint64_t;
using ClientId = std::uint32_t;

/// Streams opened less than this long after their circuit was built share it.
inline constexpr SimTime kCircuitWindow = seconds(600);

/// Synthetic block all relay addresses come from. Disjoint from client space.
inline constexpr net::Ipv4Range kRelayRange{net::Ipv4(172, 16, 0, 0), 12};

enum class Errc {
  InsufficientRelays,
  TamperedEnvelope,
  CircuitTorn,
  NotAnExit,
  UnknownStream,
  DuplicateAddress,
  SealedPayload,
};

const char* to_string(Errc code);

class OverlayError : public std::runtime_error {
 public:
  OverlayError(Errc code, const std::string& detail);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

enum Role : std::uint8_t { kGuard = 1, kMiddle = 2, kExit = 4 };

struct Relay {
  RelayId id = 0;
  net::Ipv4 address;
  std::uint8_t roles = 0;

  bool has(Role r) const { return (roles & r) != 0; }
};

class Directory {
 public:
  /// Throws DuplicateAddress when `address` is already taken.
  const Relay& add(net::Ipv4 address, std::uint8_t roles);

  const std::vector<Relay>& relays() const { return relays_; }
  const Relay& relay(RelayId id) const { return relays_.at(id); }
  bool is_relay_address(net::Ipv4 ip) const { return addresses_.count(ip) != 0; }
  std::vector<RelayId> with_role(Role r) const;
  std::size_t size() const { return relays_.size(); }

 private:
  std::vector<Relay> relays_;
  std::unordered_set<net::Ipv4> addresses_;
};

struct Circuit {
  CircuitId id = 0;
  std::array<RelayId, 3> hops{};  // guard, middle, exit
  ClientId owner = 0;             // ground truth; relays never read it
  SimTime created_at = 0;

  RelayId guard() const { return hops[0]; }
  RelayId middle() const { return hops[1]; }
  RelayId exit() const { return hops[2]; }
};

/// Samples three distinct relays: an exit-flagged exit, a guard, a middle.
/// Only relays that leave the remaining positions fillable are considered,
/// so any directory that admits a circuit yields one.
Circuit build_circuit(ClientId client, const Directory& directory, Rng& rng, CircuitId id,
                      SimTime now);

enum class AppTag { Tracker, PeerWire, Web };

const char* to_string(AppTag tag);

struct StreamRecord {
  StreamId id = 0;
  CircuitId circuit = 0;
  net::Endpoint destination;
  SimTime opened_at = 0;
  AppTag app = AppTag::Web;  // ground truth
};

// ---------------------------------------------------------------------------
// sealing

struct HopKey {
  RelayId relay = 0;
  std::uint64_t secret = 0;
};

/// Opaque layered sealing. Each layer scrambles the body with a keyed
/// stream and adds a tag; only the holder of the outermost layer's key can
/// remove it, and the payload is readable only once every layer is gone.
class SealedEnvelope {
 public:
  /// Seals `payload` for `hops` listed from innermost to outermost.
  static SealedEnvelope seal(Bytes payload, std::span<const HopKey> hops, std::uint64_t nonce);
  static SealedEnvelope plain(Bytes payload, std::uint64_t nonce);

  std::size_t layers() const { return seals_.size(); }
  std::optional<RelayId> outer_hop() const;

  void add_layer(const HopKey& key);
  /// Throws TamperedEnvelope if the outer layer is not `key`'s or its tag
  /// does not verify.
  void remove_layer(const HopKey& key);

  /// Throws SealedPayload while any layer remains.
  const Bytes& plaintext() const;

  /// Wire image as a relay sees it: header then scrambled body.
  Bytes serialize() const;

  /// Test hook: drop the outer seal without unscrambling.
  void strip_outer_seal_unsafely();

 private:
  struct Seal {
    RelayId relay;
    std::uint64_t tag;
  };
  std::vector<Seal> seals_;  // back() is outermost
  Bytes body_;
  std::uint64_t nonce_ = 0;
};

// ---------------------------------------------------------------------------
// exit vantage

enum class Direction { Outbound, Inbound };

const char* to_string(Direction d);

/// What an exit relay sees. There is deliberately no field for the client's
/// address: the exit never learns it.
struct ExitObservation {
  std::uint64_t id = 0;
  SimTime time = 0;
  RelayId exit = 0;
  CircuitId circuit = 0;
  StreamId stream = 0;
  net::Ipv4 previous_hop;
  net::Endpoint destination;
  Direction direction = Direction::Outbound;
  Bytes payload;
};

class ObservationLog {
 public:
  void append(ExitObservation obs) { entries_.push_back(std::move(obs)); }
  const std::vector<ExitObservation>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<ExitObservation> entries_;
};

/// Active hook at an exit; sees each inbound payload before it is sealed
/// toward the client and may return a replacement.
using Rewriter = std::function<std::optional<Bytes>(const ExitObservation& inbound)>;

struct InstrumentHandle {
  RelayId relay = 0;
};

/// Per-hop record kept for the privacy audit. `client_address` is set only
/// where the relay is adjacent to the client; `visible` is exactly the bytes
/// the relay handled.
struct HopRecord {
  RelayId relay = 0;
  int position = 0;  // 0 guard, 1 middle, 2 exit
  CircuitId circuit = 0;
  std::uint64_t message = 0;
  Direction direction = Direction::Outbound;
  std::optional<net::Ipv4> client_address;
  std::optional<net::Endpoint> destination;
  bool plaintext = false;
  Bytes visible;
};

/// What the far end receives from the exit.
struct Delivery {
  net::Ipv4 source;  // the exit's address
  net::Endpoint destination;
  BytesView payload;
  SimTime time = 0;
};

/// Far-end behaviour; nullopt means the connection was refused.
using Responder = std::function<std::optional<Bytes>(const Delivery&)>;

struct ExchangeResult {
  bool connected = false;
  Bytes reply;
  std::uint64_t message = 0;
};

struct PrivacyViolation {
  std::size_t record = 0;
  std::string reason;
};

class Overlay {
 public:
  Overlay(Directory directory, std::uint64_t seed, bool keep_hop_records = true);

  const Directory& directory() const { return directory_; }

  /// Reuses the client's circuit iff `now - created_at < kCircuitWindow`,
  /// otherwise builds a fresh one.
  StreamRecord open_stream(ClientId client, const net::Endpoint& destination, AppTag app,
                           SimTime now);

  /// Carries `payload` over the stream's circuit and the reply back.
  ExchangeResult send_via_circuit(StreamId stream, net::Ipv4 client_source, Bytes payload,
                                  SimTime now, const Responder& responder);

  InstrumentHandle instrument_exit(RelayId relay, ObservationLog& recorder,
                                   Rewriter rewriter = {});
  void remove_instrumentation(InstrumentHandle handle);

  /// Tears the circuit down; later sends on its streams fail with CircuitTorn.
  void tear_down(CircuitId circuit);

  const std::map<CircuitId, Circuit>& circuits() const { return circuits_; }
  const std::map<StreamId, StreamRecord>& streams() const { return streams_; }
  const std::vector<HopRecord>& hop_records() const { return hop_records_; }
  std::optional<CircuitId> current_circuit(ClientId client) const;

  /// Checks every hop record: none may pair a client address with
  /// plaintext, and none may contain the plaintext of its own message.
  std::vector<PrivacyViolation> audit_privacy() const;

 private:
  HopKey key_for(RelayId relay) const { return {relay, relay_secrets_.at(relay)}; }
  void record_hop(const Circuit& c, int position, std::uint64_t message, Direction dir,
                  std::optional<net::Ipv4> client, std::optional<net::Endpoint> dest,
                  const SealedEnvelope& env);

  struct Tap {
    ObservationLog* log = nullptr;
    Rewriter rewriter;
  };

  Directory directory_;
  Rng rng_;
  bool keep_hop_records_;
  std::vector<std::uint64_t> relay_secrets_;
  std::map<CircuitId, Circuit> circuits_;
  std::unordered_set<CircuitId> torn_;
  std::map<StreamId, StreamRecord> streams_;
  std::unordered_map<ClientId, CircuitId> current_;
  std::unordered_map<RelayId, Tap> taps_;
  std::vector<HopRecord> hop_records_;
  std::unordered_map<std::uint64_t, std::array<Bytes, 2>> message_plaintext_;  // [outbound, inbound]
  CircuitId next_circuit_ = 1;
  StreamId next_stream_ = 1;
  std::uint64_t next_message_ = 1;
  std::uint64_t next_observation_ = 1;
};

}  // namespace exitsim::onion
