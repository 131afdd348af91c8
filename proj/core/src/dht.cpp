#include "exitsim/dht.hpp"

#include <algorithm>

namespace exitsim::dht {

Distance xor_distance(const NodeId& a, const NodeId& b) {
  std::array<std::uint8_t, 20> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] ^ b[i];
  return Distance(out);
}

NodeId to_node_id(const InfoHash& h) { return NodeId(h.array()); }

int bucket_index(const NodeId& self, const NodeId& other) {
  for (std::size_t byte = 0; byte < 20; ++byte) {
    const std::uint8_t x = self[byte] ^ other[byte];
    if (x == 0) continue;
    int bit = 7;
    while (((x >> bit) & 1) == 0) --bit;
    return static_cast<int>((19 - byte) * 8) + bit;
  }
  return -1;
}

RoutingTable::RoutingTable(NodeId self, std::size_t bucket_size)
    : self_(self), bucket_size_(bucket_size) {}

bool RoutingTable::insert(const Contact& contact) {
  const int b = bucket_index(self_, contact.id);
  if (b < 0) return false;
  auto& bucket = buckets_[static_cast<std::size_t>(b)];
  for (const auto& c : bucket) {
    if (c.id == contact.id) return false;
  }
  if (bucket.size() >= bucket_size_) return false;
  bucket.push_back(contact);
  ++size_;
  return true;
}

std::vector<Contact> RoutingTable::find_closest(const NodeId& target, std::size_t k) const {
  std::vector<Contact> out;
  if (k == 0 || size_ == 0) return out;

  auto by_distance = [&target](const Contact& x, const Contact& y) {
    return xor_distance(x.id, target) < xor_distance(y.id, target);
  };
  // Appends one group of contacts whose distances all lie below those of
  // every later group.
  auto take_group = [&](std::vector<Contact> group) {
    std::sort(group.begin(), group.end(), by_distance);
    for (auto& c : group) {
      if (out.size() == k) return;
      out.push_back(std::move(c));
    }
  };

  const int b = bucket_index(self_, target);
  if (b < 0) {
    for (int j = 0; j < kIdBits && out.size() < k; ++j) take_group(buckets_[j]);
    return out;
  }
  // Same bucket as the target: distance < 2^b.
  take_group(buckets_[static_cast<std::size_t>(b)]);
  // Lower buckets: distance has its top bit at b.
  if (out.size() < k) {
    std::vector<Contact> lower;
    for (int j = 0; j < b; ++j) lower.insert(lower.end(), buckets_[j].begin(), buckets_[j].end());
    take_group(std::move(lower));
  }
  // Higher buckets: distance has its top bit at j.
  for (int j = b + 1; j < kIdBits && out.size() < k; ++j) take_group(buckets_[j]);
  return out;
}

std::vector<Contact> RoutingTable::contacts() const {
  std::vector<Contact> out;
  out.reserve(size_);
  for (const auto& bucket : buckets_) out.insert(out.end(), bucket.begin(), bucket.end());
  return out;
}

// ---------------------------------------------------------------------------

const char* to_string(KrpcMethod m) {
  switch (m) {
    case KrpcMethod::Ping: return "ping";
    case KrpcMethod::FindNode: return "find_node";
    case KrpcMethod::GetPeers: return "get_peers";
    case KrpcMethod::AnnouncePeer: return "announce_peer";
  }
  return "";
}

std::optional<KrpcMethod> method_from_string(std::string_view s) {
  if (s == "ping") return KrpcMethod::Ping;
  if (s == "find_node") return KrpcMethod::FindNode;
  if (s == "get_peers") return KrpcMethod::GetPeers;
  if (s == "announce_peer") return KrpcMethod::AnnouncePeer;
  return std::nullopt;
}

const char* to_string(Errc code) {
  switch (code) {
    case Errc::LookupFailed: return "LookupFailed";
    case Errc::UdpUnsupported: return "UdpUnsupported";
    case Errc::BadMessage: return "BadMessage";
  }
  return "Unknown";
}

DhtError::DhtError(Errc code, const std::string& detail)
    : std::runtime_error("dht: " + detail), code_(code) {}

Bytes encode_krpc(const KrpcMessage& msg) {
  bencode::Dict d;
  d["t"] = msg.transaction;
  switch (msg.kind) {
    case KrpcKind::Query:
      d["y"] = "q";
      d["q"] = to_string(msg.method.value_or(KrpcMethod::Ping));
      d["a"] = msg.body;
      break;
    case KrpcKind::Response:
      d["y"] = "r";
      d["r"] = msg.body;
      break;
    case KrpcKind::Error:
      d["y"] = "e";
      d["e"] = bencode::List{bencode::Value(msg.error_code), bencode::Value(msg.error_message)};
      break;
  }
  return bencode::encode(d);
}

KrpcMessage decode_krpc(BytesView datagram) {
  const auto decoded = bencode::decode(datagram, bencode::Mode::Lenient);
  const auto& v = decoded.value;
  const auto* t = v.find("t");
  const auto* y = v.find("y");
  if (!t || !y || !t->is_string() || !y->is_string()) {
    throw DhtError(Errc::BadMessage, "krpc message needs t and y");
  }
  KrpcMessage msg;
  msg.transaction = t->as_string();
  const auto& kind = y->as_string();
  if (kind == "q") {
    msg.kind = KrpcKind::Query;
    const auto* q = v.find("q");
    const auto* a = v.find("a");
    if (!q || !q->is_string() || !a || !a->is_dict()) {
      throw DhtError(Errc::BadMessage, "query needs q and a");
    }
    msg.method = method_from_string(q->as_string());
    if (!msg.method) throw DhtError(Errc::BadMessage, "unknown method " + q->as_string());
    msg.body = a->as_dict();
  } else if (kind == "r") {
    msg.kind = KrpcKind::Response;
    const auto* r = v.find("r");
    if (!r || !r->is_dict()) throw DhtError(Errc::BadMessage, "response needs r");
    msg.body = r->as_dict();
  } else if (kind == "e") {
    msg.kind = KrpcKind::Error;
    const auto* e = v.find("e");
    if (!e || !e->is_list() || e->as_list().size() != 2 || !e->as_list()[0].is_int() ||
        !e->as_list()[1].is_string()) {
      throw DhtError(Errc::BadMessage, "error needs [code, message]");
    }
    msg.error_code = e->as_list()[0].as_int();
    msg.error_message = e->as_list()[1].as_string();
  } else {
    throw DhtError(Errc::BadMessage, "unknown y '" + kind + "'");
  }
  return msg;
}

Bytes encode_compact_nodes(const std::vector<Contact>& nodes) {
  Bytes out;
  out.reserve(nodes.size() * 26);
  for (const auto& c : nodes) {
    out += c.id.to_bytes();
    const auto ep = btproto::encode_compact_peer(c.endpoint);
    out.append(reinterpret_cast<const char*>(ep.data()), ep.size());
  }
  return out;
}

std::vector<Contact> decode_compact_nodes(BytesView blob) {
  if (blob.size() % 26 != 0) throw DhtError(Errc::BadMessage, "compact nodes not a multiple of 26");
  std::vector<Contact> out;
  for (std::size_t i = 0; i < blob.size(); i += 26) {
    out.push_back({*NodeId::from_bytes(blob.substr(i, 20)),
                   btproto::decode_compact_peer(blob.substr(i + 20, 6))});
  }
  return out;
}

// ---------------------------------------------------------------------------

Node::Node(NodeId id, net::Endpoint endpoint, std::uint64_t secret)
    : endpoint_(endpoint), table_(id), secret_(secret) {}

Bytes Node::issue_token(net::Ipv4 requester) {
  Bytes seed = id().to_bytes() + requester.to_bytes() + std::to_string(token_counter_++);
  const std::uint64_t h = fnv1a64(seed, secret_);
  Bytes token(8, '\0');
  for (int i = 0; i < 8; ++i) token[static_cast<std::size_t>(i)] = static_cast<char>(h >> (8 * i));
  open_tokens_[token] = requester;
  return token;
}

bool Node::redeem_token(const Bytes& token, net::Ipv4 requester) {
  auto it = open_tokens_.find(token);
  if (it == open_tokens_.end() || it->second != requester) return false;
  open_tokens_.erase(it);
  return true;
}

KrpcMessage Node::handle(const net::Endpoint& source, const KrpcMessage& query, SimTime now) {
  KrpcMessage reply;
  reply.transaction = query.transaction;
  reply.kind = KrpcKind::Response;
  reply.body["id"] = id().to_bytes();

  auto error = [&reply](std::int64_t code, std::string message) {
    reply.kind = KrpcKind::Error;
    reply.body.clear();
    reply.error_code = code;
    reply.error_message = std::move(message);
    return reply;
  };
  auto arg_hash = [&query](std::string_view key) -> std::optional<NodeId> {
    auto it = query.body.find(key);
    if (it == query.body.end() || !it->second.is_string()) return std::nullopt;
    return NodeId::from_bytes(it->second.as_string());
  };

  if (query.kind != KrpcKind::Query || !query.method) return error(204, "Method Unknown");

  switch (*query.method) {
    case KrpcMethod::Ping:
      return reply;
    case KrpcMethod::FindNode: {
      auto target = arg_hash("target");
      if (!target) return error(203, "missing target");
      reply.body["nodes"] = encode_compact_nodes(table_.find_closest(*target, kBucketSize));
      return reply;
    }
    case KrpcMethod::GetPeers: {
      auto target = arg_hash("info_hash");
      if (!target) return error(203, "missing info_hash");
      bencode::List values;
      for (const auto& e : store_) {
        if (to_node_id(e.info_hash) == *target) {
          const auto b = btproto::encode_compact_peer(e.endpoint);
          values.emplace_back(Bytes(reinterpret_cast<const char*>(b.data()), b.size()));
        }
      }
      if (!values.empty()) reply.body["values"] = std::move(values);
      reply.body["nodes"] = encode_compact_nodes(table_.find_closest(*target, kBucketSize));
      reply.body["token"] = issue_token(source.ip);
      return reply;
    }
    case KrpcMethod::AnnouncePeer: {
      auto target = arg_hash("info_hash");
      auto port = query.body.find("port");
      auto token = query.body.find("token");
      if (!target || port == query.body.end() || !port->second.is_int() ||
          token == query.body.end() || !token->second.is_string()) {
        return error(203, "announce_peer needs info_hash, port, token");
      }
      if (!net::valid_port(port->second.as_int())) return error(203, "bad port");
      if (!redeem_token(token->second.as_string(), source.ip)) return error(203, "bad token");
      // The stored address is the datagram's source, never a payload field.
      const PeerEndpoint ep{source.ip, static_cast<std::uint16_t>(port->second.as_int())};
      const InfoHash h(target->array());
      auto existing = std::find_if(store_.begin(), store_.end(), [&](const PeerStoreEntry& e) {
        return e.info_hash == h && e.endpoint == ep;
      });
      if (existing != store_.end()) {
        existing->stored_at = now;
      } else {
        store_.push_back({h, ep, now});
      }
      return reply;
    }
  }
  return error(204, "Method Unknown");
}

// ---------------------------------------------------------------------------

DhtNetwork DhtNetwork::build(std::size_t count, net::Ipv4Range range, std::uint16_t port,
                             Rng& rng) {
  DhtNetwork net;
  for (std::size_t i = 0; i < count; ++i) {
    std::array<std::uint8_t, 20> id{};
    for (auto& b : id) b = static_cast<std::uint8_t>(rng.next());
    net.add_node(NodeId(id), {range.at(static_cast<std::uint32_t>(i + 1)), port});
  }
  net.connect_full_mesh();
  return net;
}

Node& DhtNetwork::add_node(NodeId id, net::Endpoint endpoint) {
  const std::uint64_t secret = fnv1a64(id.to_bytes()) ^ nodes_.size();
  by_endpoint_[endpoint] = nodes_.size();
  nodes_.emplace_back(id, endpoint, secret);
  return nodes_.back();
}

void DhtNetwork::connect_full_mesh() {
  for (auto& node : nodes_) {
    for (const auto& other : nodes_) node.table().insert({other.id(), other.endpoint()});
  }
}

std::vector<net::Endpoint> DhtNetwork::bootstrap_endpoints(std::size_t n) const {
  std::vector<net::Endpoint> out;
  for (std::size_t i = 0; i < nodes_.size() && i < n; ++i) out.push_back(nodes_[i].endpoint());
  return out;
}

std::optional<Bytes> DhtNetwork::send_datagram(Interface iface, const net::Endpoint& src,
                                               const net::Endpoint& dst, BytesView datagram,
                                               SimTime now) {
  if (iface == Interface::Overlay) {
    throw DhtError(Errc::UdpUnsupported, "UDP cannot be carried by the overlay");
  }
  auto it = by_endpoint_.find(dst);
  if (it == by_endpoint_.end()) return std::nullopt;
  const KrpcMessage query = decode_krpc(datagram);
  return encode_krpc(nodes_[it->second].handle(src, query, now));
}

std::optional<KrpcMessage> DhtNetwork::query(Interface iface, const net::Endpoint& origin,
                                             const net::Endpoint& dst, KrpcMessage msg,
                                             SimTime now, std::size_t& counter) {
  const std::uint16_t t = next_transaction_++;
  msg.transaction = Bytes{static_cast<char>(t >> 8), static_cast<char>(t)};
  const Bytes wire = encode_krpc(msg);
  ++counter;
  if (observer_) observer_(origin, dst, wire);
  auto reply = send_datagram(iface, origin, dst, wire, now);
  if (!reply) return std::nullopt;
  KrpcMessage decoded = decode_krpc(*reply);
  if (decoded.transaction != msg.transaction) return std::nullopt;
  return decoded;
}

namespace {

NodeId origin_id(const net::Endpoint& origin) {
  const Bytes key = origin.ip.to_bytes();
  std::array<std::uint8_t, 20> id{};
  std::uint64_t h = fnv1a64(key);
  for (std::size_t i = 0; i < id.size(); ++i) {
    if (i % 8 == 0) h = fnv1a64(key, h + i);
    id[i] = static_cast<std::uint8_t>(h >> (8 * (i % 8)));
  }
  return NodeId(id);
}

}  // namespace

LookupResult DhtNetwork::lookup(const net::Endpoint& origin, const InfoHash& target, SimTime now,
                                Interface iface) {
  if (iface == Interface::Overlay) {
    throw DhtError(Errc::UdpUnsupported, "UDP cannot be carried by the overlay");
  }
  const NodeId key = to_node_id(target);
  const Bytes self_id = origin_id(origin).to_bytes();
  LookupResult result;

  std::map<Distance, Contact> candidates;
  std::set<NodeId> queried;
  std::map<Distance, Contact> responded;
  std::map<NodeId, std::vector<PeerEndpoint>> values;

  auto ask = [&](const net::Endpoint& dst) -> std::optional<NodeId> {
    KrpcMessage q;
    q.kind = KrpcKind::Query;
    q.method = KrpcMethod::GetPeers;
    q.body["id"] = self_id;
    q.body["info_hash"] = target.to_bytes();
    auto reply = query(iface, origin, dst, std::move(q), now, result.queries);
    if (!reply || reply->kind != KrpcKind::Response) return std::nullopt;
    auto id_it = reply->body.find("id");
    if (id_it == reply->body.end() || !id_it->second.is_string()) return std::nullopt;
    auto id = NodeId::from_bytes(id_it->second.as_string());
    if (!id) return std::nullopt;
    responded.emplace(xor_distance(*id, key), Contact{*id, dst});
    if (auto tok = reply->body.find("token"); tok != reply->body.end() && tok->second.is_string()) {
      result.tokens[*id] = tok->second.as_string();
    }
    if (auto nodes = reply->body.find("nodes"); nodes != reply->body.end() && nodes->second.is_string()) {
      for (const auto& c : decode_compact_nodes(nodes->second.as_string())) {
        candidates.emplace(xor_distance(c.id, key), c);
      }
    }
    if (auto vals = reply->body.find("values"); vals != reply->body.end() && vals->second.is_list()) {
      for (const auto& v : vals->second.as_list()) {
        if (v.is_string() && v.as_string().size() == btproto::kCompactPeerSize) {
          values[*id].push_back(btproto::decode_compact_peer(v.as_string()));
        }
      }
    }
    return id;
  };

  for (const auto& ep : bootstrap_endpoints()) {
    if (auto id = ask(ep)) {
      queried.insert(*id);
      candidates.emplace(xor_distance(*id, key), Contact{*id, ep});
    }
  }
  if (responded.empty()) throw DhtError(Errc::LookupFailed, "no live bootstrap node");

  for (;;) {
    std::vector<Contact> batch;
    std::size_t rank = 0;
    for (const auto& [dist, c] : candidates) {
      if (rank++ >= kBucketSize) break;
      if (queried.count(c.id) == 0) batch.push_back(c);
      if (batch.size() == kAlpha) break;
    }
    if (batch.empty()) break;
    for (const auto& c : batch) {
      queried.insert(c.id);
      if (!ask(c.endpoint)) candidates.erase(xor_distance(c.id, key));
    }
  }

  for (const auto& [dist, c] : responded) {
    if (result.closest.size() == kBucketSize) break;
    result.closest.push_back(c);
    for (const auto& v : values[c.id]) result.values.insert(v);
  }
  return result;
}

std::vector<NodeId> DhtNetwork::announce(const net::Endpoint& origin, const InfoHash& info_hash,
                                         std::uint16_t port, SimTime now, Interface iface) {
  LookupResult found = lookup(origin, info_hash, now, iface);
  const Bytes self_id = origin_id(origin).to_bytes();
  std::vector<NodeId> stored;
  for (const auto& c : found.closest) {
    auto tok = found.tokens.find(c.id);
    if (tok == found.tokens.end()) continue;
    KrpcMessage q;
    q.kind = KrpcKind::Query;
    q.method = KrpcMethod::AnnouncePeer;
    q.body["id"] = self_id;
    q.body["info_hash"] = info_hash.to_bytes();
    q.body["port"] = bencode::Integer{port};
    q.body["token"] = tok->second;
    auto reply = query(iface, origin, c.endpoint, std::move(q), now, found.queries);
    if (reply && reply->kind == KrpcKind::Response) stored.push_back(c.id);
  }
  if (stored.empty()) throw DhtError(Errc::LookupFailed, "no node accepted the announce");
  return stored;
}

std::set<PeerEndpoint> DhtNetwork::get_peers(const net::Endpoint& prober,
                                             const InfoHash& info_hash, SimTime now,
                                             Interface iface) {
  return lookup(prober, info_hash, now, iface).values;
}

}  // namespace exitsim::dht
