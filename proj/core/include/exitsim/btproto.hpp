#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "exitsim/bencode.hpp"
#include "exitsim/bytes.hpp"
#include "exitsim/net.hpp"

// BitTorrent control-message codecs: HTTP tracker announce (query string and
// bencoded response), compact peer lists, the peer-wire handshake and the
// extension-protocol handshake.
namespace exitsim::btproto {

struct InfoHashTag {};
struct PeerIdTag {};
using InfoHash = FixedBytes<20, InfoHashTag>;
using PeerId = FixedBytes<20, PeerIdTag>;
using PeerEndpoint = net::Endpoint;

enum class Errc {
  MissingField,
  BadLength,
  BadPort,
  BadIpLiteral,
  BadPeersLength,
  BadProtocolString,
  BadAddressLength,
  BadFrame,
  BadField,
};

const char* to_string(Errc code);

class ProtoError : public std::runtime_error {
 public:
  ProtoError(Errc code, const std::string& detail);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

// ---------------------------------------------------------------------------
// tracker announce

enum class AnnounceEvent { None, Started, Stopped, Completed };

const char* to_string(AnnounceEvent e);

struct AnnounceRequest {
  InfoHash info_hash;
  PeerId peer_id;
  std::uint16_t port = 0;
  std::uint64_t uploaded = 0;
  std::uint64_t downloaded = 0;
  std::uint64_t left = 0;
  AnnounceEvent event = AnnounceEvent::None;
  /// Self-reported address; present iff the query carried `ip=`.
  std::optional<net::Ipv4> ip;
  bool compact = true;
  std::optional<std::int64_t> numwant;
  /// Parameters this codec does not interpret, kept in order, decoded.
  std::vector<std::pair<std::string, Bytes>> extra;

  friend bool operator==(const AnnounceRequest&, const AnnounceRequest&) = default;
};

std::string percent_encode(BytesView raw);
/// '+' is not treated as space; BitTorrent clients always escape binary.
std::optional<Bytes> percent_decode(std::string_view text);

/// Builds the query string (no leading '?').
std::string build_announce_query(const AnnounceRequest& req);
AnnounceRequest parse_announce_query(std::string_view query);

struct AnnounceResponse {
  std::int64_t interval = 0;
  std::vector<PeerEndpoint> peers;
  std::optional<std::int64_t> complete;
  std::optional<std::int64_t> incomplete;

  friend bool operator==(const AnnounceResponse&, const AnnounceResponse&) = default;
};

enum class PeerEncoding { Compact, Dictionary };

Bytes build_announce_response(const AnnounceResponse& resp, PeerEncoding encoding);
/// Shorthand used by the tracker: complete=0, incomplete=peers.size().
Bytes build_announce_response(std::span<const PeerEndpoint> peers, std::int64_t interval,
                              bool compact);
/// Accepts compact and dictionary peer lists. Bencode errors propagate as
/// bencode::DecodeError; the body is decoded leniently.
AnnounceResponse parse_announce_response(BytesView body);

/// True when the response body used the compact peer encoding.
bool response_is_compact(BytesView body);

// ---------------------------------------------------------------------------
// compact peers

inline constexpr std::size_t kCompactPeerSize = 6;

std::array<std::uint8_t, kCompactPeerSize> encode_compact_peer(const PeerEndpoint& p);
PeerEndpoint decode_compact_peer(BytesView raw);

Bytes encode_compact_peers(std::span<const PeerEndpoint> peers);
std::vector<PeerEndpoint> decode_compact_peers(BytesView blob);

// ---------------------------------------------------------------------------
// peer wire

inline constexpr std::string_view kProtocolString = "BitTorrent protocol";
inline constexpr std::size_t kHandshakeSize = 1 + 19 + 8 + 20 + 20;
inline constexpr std::uint8_t kExtendedMessageId = 20;

struct PeerHandshake {
  std::array<std::uint8_t, 8> reserved{};
  InfoHash info_hash;
  PeerId peer_id;

  /// Extension protocol: bit 0x10 of reserved byte 5.
  bool extension_supported() const { return (reserved[5] & 0x10) != 0; }
  void set_extension_supported(bool on) {
    reserved[5] = on ? (reserved[5] | 0x10) : (reserved[5] & ~0x10);
  }

  friend bool operator==(const PeerHandshake&, const PeerHandshake&) = default;
};

Bytes build_handshake(const PeerHandshake& hs);
PeerHandshake parse_handshake(BytesView frame);

struct ExtendedHandshake {
  std::optional<std::uint16_t> port;      // "p"
  std::optional<std::string> version;     // "v"
  std::optional<net::Ipv4> yourip;        // "yourip"
  std::optional<net::Ipv4> ipv4;          // "ipv4"
  /// Payload keys other than the four surfaced above, preserved as decoded.
  bencode::Dict other;

  friend bool operator==(const ExtendedHandshake&, const ExtendedHandshake&) = default;
};

/// Length-prefixed frame: <len:4 BE><id=20><ext id=0><bencoded dict>.
Bytes build_extended_handshake(const ExtendedHandshake& ext);
ExtendedHandshake parse_extended_handshake(BytesView frame);
/// Payload-only variant (the bencoded dict without framing).
ExtendedHandshake parse_extended_payload(BytesView payload);

/// A connection opening as a client writes it: handshake, then optionally
/// the extended handshake in the same write.
struct PeerWireOpening {
  PeerHandshake handshake;
  std::optional<ExtendedHandshake> extended;
};

PeerWireOpening parse_peer_wire_opening(BytesView bytes);

// ---------------------------------------------------------------------------
// classification of opaque payloads

enum class FrameKind {
  AnnounceQuery,
  AnnounceResponse,
  PeerWire,
  ExtendedHandshake,
  Bencoded,
  Unknown,
};

const char* to_string(FrameKind k);

/// Best-effort sniffing by leading bytes; does not validate the frame.
FrameKind classify(BytesView bytes);

}  // namespace exitsim::btproto
