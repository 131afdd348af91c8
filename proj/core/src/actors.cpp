#include "exitsim/actors.hpp"

#include <algorithm>

namespace exitsim::actors {

const char* to_string(UsageMode m) {
  switch (m) {
    case UsageMode::TrackerViaTor: return "TRACKER_VIA_TOR";
    case UsageMode::PeersViaTor: return "PEERS_VIA_TOR";
    case UsageMode::Both: return "BOTH";
  }
  return "";
}

std::optional<UsageMode> usage_mode_from_string(std::string_view s) {
  if (s == "TRACKER_VIA_TOR") return UsageMode::TrackerViaTor;
  if (s == "PEERS_VIA_TOR") return UsageMode::PeersViaTor;
  if (s == "BOTH") return UsageMode::Both;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

void Internet::listen(const net::Endpoint& at, onion::Responder handler) {
  listeners_[at] = std::move(handler);
}

std::optional<Bytes> Internet::deliver(net::Ipv4 from, const net::Endpoint& to, BytesView payload,
                                       SimTime now) const {
  auto it = listeners_.find(to);
  if (it == listeners_.end()) return std::nullopt;
  return it->second(onion::Delivery{from, to, payload, now});
}

onion::Responder Internet::as_responder() const {
  return [this](const onion::Delivery& d) { return deliver(d.source, d.destination, d.payload, d.time); };
}

// ---------------------------------------------------------------------------

btproto::AnnounceResponse Tracker::serve(const btproto::AnnounceRequest& request,
                                         net::Ipv4 source, SimTime now) {
  if (options_.closed_catalog && catalog_.count(request.info_hash) == 0) {
    throw TrackerError("UnknownTorrent: " + request.info_hash.to_hex());
  }
  auto& members = swarms_[request.info_hash];
  const PeerEndpoint registered{request.ip.value_or(source), request.port};

  auto self = std::find_if(members.begin(), members.end(),
                           [&](const SwarmMember& m) { return m.peer_id == request.peer_id; });
  if (request.event == btproto::AnnounceEvent::Stopped) {
    if (self != members.end()) members.erase(self);
  } else if (self != members.end()) {
    self->endpoint = registered;
    self->last_seen = now;
  } else {
    members.push_back({request.peer_id, registered, now});
  }

  std::size_t want = options_.default_numwant;
  if (request.numwant && *request.numwant >= 0) want = static_cast<std::size_t>(*request.numwant);

  btproto::AnnounceResponse resp;
  resp.interval = options_.interval_seconds;
  if (request.event != btproto::AnnounceEvent::Stopped) {
    for (const auto& m : members) {
      if (resp.peers.size() >= want) break;
      if (m.peer_id == request.peer_id) continue;
      resp.peers.push_back(m.endpoint);
    }
  }
  resp.complete = 0;
  resp.incomplete = static_cast<std::int64_t>(resp.peers.size());
  return resp;
}

Bytes Tracker::handle(BytesView query, net::Ipv4 source, SimTime now) {
  auto failure = [](const std::string& why) {
    bencode::Dict d;
    d["failure reason"] = why;
    return bencode::encode(d);
  };
  try {
    const auto request = btproto::parse_announce_query(query);
    const auto resp = serve(request, source, now);
    return btproto::build_announce_response(
        resp, request.compact ? btproto::PeerEncoding::Compact : btproto::PeerEncoding::Dictionary);
  } catch (const btproto::ProtoError& e) {
    return failure(e.what());
  } catch (const TrackerError& e) {
    return failure(e.what());
  }
}

const std::vector<Tracker::SwarmMember>& Tracker::swarm(const InfoHash& h) const {
  static const std::vector<SwarmMember> kEmpty;
  auto it = swarms_.find(h);
  return it == swarms_.end() ? kEmpty : it->second;
}

// ---------------------------------------------------------------------------

PeerListener::PeerListener(PeerId id, std::uint16_t listen_port, std::string version)
    : id_(id), listen_port_(listen_port), version_(std::move(version)) {}

std::optional<Bytes> PeerListener::respond(const onion::Delivery& delivery) const {
  btproto::PeerWireOpening opening;
  try {
    opening = btproto::parse_peer_wire_opening(delivery.payload);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  btproto::PeerHandshake hs;
  hs.info_hash = opening.handshake.info_hash;
  hs.peer_id = id_;
  hs.set_extension_supported(true);
  btproto::ExtendedHandshake ext;
  ext.port = listen_port_;
  ext.version = version_;
  return btproto::build_handshake(hs) + btproto::build_extended_handshake(ext);
}

AttackerPeer::AttackerPeer(PeerEndpoint endpoint, PeerId id)
    : endpoint_(endpoint), listener_(id, endpoint.port, "Transmission 2.92") {}

std::optional<Bytes> AttackerPeer::respond(const onion::Delivery& delivery) {
  btproto::PeerWireOpening opening;
  try {
    opening = btproto::parse_peer_wire_opening(delivery.payload);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  log_.push_back({log_.size() + 1, delivery.time, delivery.source, opening.handshake.info_hash,
                  opening.handshake.peer_id});
  return listener_.respond(delivery);
}

Bytes build_web_request(const net::Endpoint& host, std::string_view path) {
  std::string req = "GET ";
  req += path;
  req += " HTTP/1.1\r\nHost: ";
  req += host.ip.to_string();
  req += "\r\nUser-Agent: Mozilla/5.0\r\nAccept: text/html\r\n\r\n";
  return req;
}

std::optional<Bytes> web_respond(const onion::Delivery& delivery) {
  if (delivery.payload.substr(0, 4) != "GET ") return std::nullopt;
  const std::string body = "<html><body>" + delivery.destination.ip.to_string() + "</body></html>";
  return "HTTP/1.1 200 OK\r\nContent-Type: text/html\r\nContent-Length: " +
         std::to_string(body.size()) + "\r\n\r\n" + body;
}

// ---------------------------------------------------------------------------

Client::Client(ClientProfile profile) : profile_(std::move(profile)) {}

PeerListener Client::listener() const {
  return PeerListener(profile_.peer_id, profile_.listen_port, "SimTorrent/1.0");
}

btproto::AnnounceRequest Client::announce_request(const InfoHash& h) const {
  btproto::AnnounceRequest req;
  req.info_hash = h;
  req.peer_id = profile_.peer_id;
  req.port = profile_.listen_port;
  req.left = 1u << 20;
  req.event = started_.count(h) ? btproto::AnnounceEvent::None : btproto::AnnounceEvent::Started;
  if (profile_.announce_includes_ip) req.ip = profile_.public_ip;
  req.compact = true;
  req.numwant = 50;
  return req;
}

Bytes Client::peer_wire_opening(const InfoHash& h) const {
  btproto::PeerHandshake hs;
  hs.info_hash = h;
  hs.peer_id = profile_.peer_id;
  hs.set_extension_supported(true);
  btproto::ExtendedHandshake ext;
  ext.port = profile_.listen_port;
  ext.version = "SimTorrent/1.0";
  if (profile_.exthandshake_includes_ip) {
    ext.yourip = profile_.public_ip;
    ext.ipv4 = profile_.public_ip;
  }
  return btproto::build_handshake(hs) + btproto::build_extended_handshake(ext);
}

Client::Sent Client::send(World& world, bool via_overlay, harness::ActionKind kind,
                          harness::Application app, const net::Endpoint& destination,
                          Bytes payload, std::uint8_t exposes_if_seen, SimTime now) {
  harness::LedgerRecord rec;
  rec.time = now;
  rec.client = profile_.id;
  rec.public_ip = profile_.public_ip;
  rec.kind = kind;
  rec.app = app;
  rec.destination = destination;
  rec.digest = digest_hex(payload);

  if (!via_overlay) {
    world.ledger.append(rec);
    auto reply = world.internet.deliver(profile_.public_ip, destination, payload, now);
    return {reply.has_value(), reply.value_or(Bytes{})};
  }

  const onion::AppTag tag = app == harness::Application::Tracker ? onion::AppTag::Tracker
                            : app == harness::Application::Web   ? onion::AppTag::Web
                                                                 : onion::AppTag::PeerWire;
  const auto stream = world.overlay.open_stream(profile_.id, destination, tag, now);
  const onion::RelayId exit = world.overlay.circuits().at(stream.circuit).exit();
  rec.circuit = stream.circuit;
  rec.stream = stream.id;
  rec.exit = exit;
  if (world.exposure.instrumented_exits.count(exit) != 0) rec.exposes = exposes_if_seen;
  world.ledger.append(rec);

  auto result = world.overlay.send_via_circuit(stream.id, profile_.public_ip, std::move(payload),
                                               now, world.internet.as_responder());
  return {result.connected, std::move(result.reply)};
}

void Client::announce(World& world, std::size_t torrent, SimTime now) {
  const InfoHash& h = profile_.torrents.at(torrent);
  const auto request = announce_request(h);
  started_.insert(h);

  std::uint8_t exposes = 0;
  if (profile_.dht_enabled) exposes |= harness::kExposesDht;
  if (request.ip) exposes |= harness::kExposesPayload;
  if (profile_.usage_mode == UsageMode::TrackerViaTor && world.exposure.hijack_active) {
    exposes |= harness::kExposesHijack;
  }

  ++stats_.announces;
  const Sent sent = send(world, profile_.tracker_via_overlay(), harness::ActionKind::Announce,
                         harness::Application::Tracker, world.tracker,
                         btproto::build_announce_query(request), exposes, now);
  if (!sent.connected) return;

  btproto::AnnounceResponse resp;
  try {
    resp = btproto::parse_announce_response(sent.reply);
  } catch (const std::exception&) {
    ++stats_.unparsed_responses;
    return;
  }
  connect_peers(world, h, resp.peers, now);
}

void Client::connect_peers(World& world, const InfoHash& h, const std::vector<PeerEndpoint>& peers,
                           SimTime now) {
  auto& seen = contacted_[h];
  const PeerEndpoint self{profile_.public_ip, profile_.listen_port};
  std::uint8_t exposes = 0;
  if (profile_.dht_enabled) exposes |= harness::kExposesDht;
  if (profile_.exthandshake_includes_ip) exposes |= harness::kExposesPayload;

  std::size_t attempts = 0;
  for (const auto& peer : peers) {
    if (attempts >= world.max_peer_connections) break;
    if (peer == self || !seen.insert(peer).second) continue;
    ++attempts;
    ++stats_.peer_attempts;
    const Sent sent = send(world, profile_.peers_via_overlay(), harness::ActionKind::PeerHandshake,
                           harness::Application::PeerWire, peer, peer_wire_opening(h), exposes, now);
    if (sent.connected) ++stats_.peer_connected;
  }
}

void Client::dht_maintenance(World& world, SimTime now) {
  if (!profile_.dht_enabled) return;
  const net::Endpoint origin{profile_.public_ip, profile_.listen_port};
  for (const auto& h : profile_.torrents) {
    try {
      world.dht.announce(origin, h, profile_.listen_port, now, dht::Interface::Overlay);
      continue;
    } catch (const dht::DhtError& e) {
      if (e.code() != dht::Errc::UdpUnsupported) throw;
    }
    // Fall back to the public interface.
    world.dht.set_observer([&](const net::Endpoint&, const net::Endpoint& to, BytesView wire) {
      harness::LedgerRecord rec;
      rec.time = now;
      rec.client = profile_.id;
      rec.public_ip = profile_.public_ip;
      rec.kind = harness::ActionKind::DhtQuery;
      rec.app = harness::Application::Dht;
      rec.destination = to;
      rec.digest = digest_hex(wire);
      world.ledger.append(rec);
    });
    try {
      world.dht.announce(origin, h, profile_.listen_port, now, dht::Interface::Public);
      ++stats_.dht_announces;
    } catch (const dht::DhtError&) {
      ++stats_.dht_failures;
    }
    world.dht.set_observer({});
  }
}

void Client::browse(World& world, const WebTarget& target, SimTime now) {
  ++stats_.web_requests;
  send(world, true, harness::ActionKind::WebRequest, harness::Application::Web, target.host,
       build_web_request(target.host, "/"), 0, now);
}

}  // namespace exitsim::actors
