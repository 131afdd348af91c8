#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "exitsim/bencode.hpp"
#include "exitsim/btproto.hpp"
#include "exitsim/bytes.hpp"
#include "exitsim/net.hpp"
#include "exitsim/rng.hpp"
#include "exitsim/sim_time.hpp"

// Kademlia DHT in the Mainline flavour (160-bit ids, k = 8, alpha = 3),
// carried over a simulated UDP channel that only public interfaces reach.
namespace exitsim::dht {

struct NodeIdTag {};
struct DistanceTag {};
using NodeId = FixedBytes<20, NodeIdTag>;
/// 160-bit unsigned integer, big-endian; operator<=> is numeric order.
using Distance = FixedBytes<20, DistanceTag>;

using btproto::InfoHash;
using btproto::PeerEndpoint;

inline constexpr std::size_t kBucketSize = 8;
inline constexpr std::size_t kAlpha = 3;
inline constexpr int kIdBits = 160;

Distance xor_distance(const NodeId& a, const NodeId& b);
/// Info-hashes and node ids share one keyspace.
NodeId to_node_id(const InfoHash& h);
/// Index of the highest bit where the ids differ (159 = most significant),
/// or -1 when they are equal. Also the k-bucket index of `other` in the
/// table owned by `self`.
int bucket_index(const NodeId& self, const NodeId& other);

struct Contact {
  NodeId id;
  net::Endpoint endpoint;

  friend bool operator==(const Contact&, const Contact&) = default;
};

class RoutingTable {
 public:
  explicit RoutingTable(NodeId self, std::size_t bucket_size = kBucketSize);

  const NodeId& self() const { return self_; }

  /// Returns false when the contact was not added: it is the owner, it is
  /// already present, or its bucket is full (the newcomer is dropped).
  bool insert(const Contact& contact);

  /// Up to `k` contacts ordered by XOR distance to `target`. Walks buckets
  /// outward from the target's bucket rather than scanning the whole table.
  std::vector<Contact> find_closest(const NodeId& target, std::size_t k) const;

  std::vector<Contact> contacts() const;
  std::size_t size() const { return size_; }

 private:
  NodeId self_;
  std::size_t bucket_size_;
  std::array<std::vector<Contact>, kIdBits> buckets_;
  std::size_t size_ = 0;
};

// ---------------------------------------------------------------------------
// KRPC

enum class KrpcKind { Query, Response, Error };
enum class KrpcMethod { Ping, FindNode, GetPeers, AnnouncePeer };

const char* to_string(KrpcMethod m);
std::optional<KrpcMethod> method_from_string(std::string_view s);

struct KrpcMessage {
  Bytes transaction;
  KrpcKind kind = KrpcKind::Query;
  std::optional<KrpcMethod> method;  // queries only
  bencode::Dict body;                // "a" for queries, "r" for responses
  std::int64_t error_code = 0;
  std::string error_message;

  friend bool operator==(const KrpcMessage&, const KrpcMessage&) = default;
};

Bytes encode_krpc(const KrpcMessage& msg);
KrpcMessage decode_krpc(BytesView datagram);

/// 26-byte compact node info: 20-byte id then a compact endpoint.
Bytes encode_compact_nodes(const std::vector<Contact>& nodes);
std::vector<Contact> decode_compact_nodes(BytesView blob);

// ---------------------------------------------------------------------------

enum class Errc { LookupFailed, UdpUnsupported, BadMessage };

const char* to_string(Errc code);

class DhtError : public std::runtime_error {
 public:
  DhtError(Errc code, const std::string& detail);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

struct PeerStoreEntry {
  InfoHash info_hash;
  PeerEndpoint endpoint;
  SimTime stored_at;

  friend bool operator==(const PeerStoreEntry&, const PeerStoreEntry&) = default;
};

/// Which local interface a datagram leaves from. The overlay carries TCP
/// streams only, so UDP sent on it never arrives.
enum class Interface { Public, Overlay };

class Node {
 public:
  Node(NodeId id, net::Endpoint endpoint, std::uint64_t secret);

  const NodeId& id() const { return table_.self(); }
  const net::Endpoint& endpoint() const { return endpoint_; }
  RoutingTable& table() { return table_; }
  const RoutingTable& table() const { return table_; }
  const std::vector<PeerStoreEntry>& store() const { return store_; }

  /// Answers one query. `source` is the datagram's transport source.
  KrpcMessage handle(const net::Endpoint& source, const KrpcMessage& query, SimTime now);

 private:
  Bytes issue_token(net::Ipv4 requester);
  bool redeem_token(const Bytes& token, net::Ipv4 requester);

  net::Endpoint endpoint_;
  RoutingTable table_;
  std::vector<PeerStoreEntry> store_;
  std::map<Bytes, net::Ipv4> open_tokens_;
  std::uint64_t secret_;
  std::uint64_t token_counter_ = 0;
};

/// Called for every query datagram a lookup sends: (source, destination, bytes).
using DatagramObserver =
    std::function<void(const net::Endpoint&, const net::Endpoint&, BytesView)>;

struct LookupResult {
  std::vector<Contact> closest;               // responded nodes, nearest first
  std::map<NodeId, Bytes> tokens;             // per responded node
  std::set<PeerEndpoint> values;              // from the closest k only
  std::size_t queries = 0;
};

class DhtNetwork {
 public:
  DhtNetwork() = default;

  /// `count` nodes with random ids at consecutive addresses of `range`,
  /// every node offered every other node as a contact.
  static DhtNetwork build(std::size_t count, net::Ipv4Range range, std::uint16_t port, Rng& rng);

  Node& add_node(NodeId id, net::Endpoint endpoint);
  /// Offers every node to every other node's routing table.
  void connect_full_mesh();

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<net::Endpoint> bootstrap_endpoints(std::size_t n = kAlpha) const;

  /// One UDP exchange. Throws UdpUnsupported on the overlay interface;
  /// returns nullopt when nobody listens at `dst`.
  std::optional<Bytes> send_datagram(Interface iface, const net::Endpoint& src,
                                     const net::Endpoint& dst, BytesView datagram, SimTime now);

  /// Iterative get_peers lookup towards `target` from an outside endpoint.
  LookupResult lookup(const net::Endpoint& origin, const InfoHash& target, SimTime now,
                      Interface iface = Interface::Public);

  /// Stores (origin.ip, port) at the k closest nodes. Returns the ids of the
  /// nodes that accepted the announce.
  std::vector<NodeId> announce(const net::Endpoint& origin, const InfoHash& info_hash,
                               std::uint16_t port, SimTime now,
                               Interface iface = Interface::Public);

  std::set<PeerEndpoint> get_peers(const net::Endpoint& prober, const InfoHash& info_hash,
                                   SimTime now, Interface iface = Interface::Public);

  void set_observer(DatagramObserver observer) { observer_ = std::move(observer); }

 private:
  std::optional<KrpcMessage> query(Interface iface, const net::Endpoint& origin,
                                   const net::Endpoint& dst, KrpcMessage msg, SimTime now,
                                   std::size_t& counter);

  std::vector<Node> nodes_;
  std::unordered_map<net::Endpoint, std::size_t> by_endpoint_;
  DatagramObserver observer_;
  std::uint16_t next_transaction_ = 0;
};

}  // namespace exitsim::dht
