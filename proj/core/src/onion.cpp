#include "exitsim/onion.hpp"

#include <algorithm>

namespace exitsim::onion {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::InsufficientRelays: return "InsufficientRelays";
    case Errc::TamperedEnvelope: return "TamperedEnvelope";
    case Errc::CircuitTorn: return "CircuitTorn";
    case Errc::NotAnExit: return "NotAnExit";
    case Errc::UnknownStream: return "UnknownStream";
    case Errc::DuplicateAddress: return "DuplicateAddress";
    case Errc::SealedPayload: return "SealedPayload";
  }
  return "Unknown";
}

OverlayError::OverlayError(Errc code, const std::string& detail)
    : std::runtime_error(std::string("onion: ") + to_string(code) + ": " + detail), code_(code) {}

const char* to_string(AppTag tag) {
  switch (tag) {
    case AppTag::Tracker: return "tracker";
    case AppTag::PeerWire: return "peer_wire";
    case AppTag::Web: return "web";
  }
  return "";
}

const char* to_string(Direction d) { return d == Direction::Outbound ? "outbound" : "inbound"; }

// ---------------------------------------------------------------------------

const Relay& Directory::add(net::Ipv4 address, std::uint8_t roles) {
  if (!addresses_.insert(address).second) {
    throw OverlayError(Errc::DuplicateAddress, address.to_string());
  }
  relays_.push_back({static_cast<RelayId>(relays_.size()), address, roles});
  return relays_.back();
}

std::vector<RelayId> Directory::with_role(Role r) const {
  std::vector<RelayId> out;
  for (const auto& relay : relays_) {
    if (relay.has(r)) out.push_back(relay.id);
  }
  return out;
}

Circuit build_circuit(ClientId client, const Directory& directory, Rng& rng, CircuitId id,
                      SimTime now) {
  const auto& relays = directory.relays();
  auto fillable = [&](RelayId exit, std::optional<RelayId> guard) {
    for (const auto& g : relays) {
      if (!g.has(kGuard) || g.id == exit) continue;
      if (guard && g.id != *guard) continue;
      for (const auto& m : relays) {
        if (m.has(kMiddle) && m.id != exit && m.id != g.id) return true;
      }
    }
    return false;
  };

  std::vector<RelayId> exits;
  for (const auto& r : relays) {
    if (r.has(kExit) && fillable(r.id, std::nullopt)) exits.push_back(r.id);
  }
  if (exits.empty()) {
    throw OverlayError(Errc::InsufficientRelays,
                       "no guard/middle/exit assignment among " + std::to_string(relays.size()) +
                           " relays");
  }
  const RelayId exit = exits[rng.index(exits.size())];

  std::vector<RelayId> guards;
  for (const auto& r : relays) {
    if (r.has(kGuard) && r.id != exit && fillable(exit, r.id)) guards.push_back(r.id);
  }
  const RelayId guard = guards[rng.index(guards.size())];

  std::vector<RelayId> middles;
  for (const auto& r : relays) {
    if (r.has(kMiddle) && r.id != exit && r.id != guard) middles.push_back(r.id);
  }
  const RelayId middle = middles[rng.index(middles.size())];

  return Circuit{id, {guard, middle, exit}, client, now};
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void scramble(Bytes& body, std::uint64_t secret, std::uint64_t nonce, std::size_t depth) {
  std::uint64_t state = secret ^ (nonce * 0xd1b54a32d192ed03ull) ^ (depth * 0x8cb92ba72f3d8dd7ull);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (i % 8 == 0) word = splitmix(state);
    body[i] = static_cast<char>(static_cast<unsigned char>(body[i]) ^ ((word >> (8 * (i % 8))) & 0xFF));
  }
}

std::uint64_t layer_tag(const Bytes& body, std::uint64_t secret, std::uint64_t nonce,
                        std::size_t depth) {
  return fnv1a64(body, secret ^ (nonce + 0x632be59bd9b4e019ull * (depth + 1)));
}

}  // namespace

SealedEnvelope SealedEnvelope::plain(Bytes payload, std::uint64_t nonce) {
  SealedEnvelope env;
  env.body_ = std::move(payload);
  env.nonce_ = nonce;
  return env;
}

SealedEnvelope SealedEnvelope::seal(Bytes payload, std::span<const HopKey> hops,
                                    std::uint64_t nonce) {
  SealedEnvelope env = plain(std::move(payload), nonce);
  for (const auto& key : hops) env.add_layer(key);
  return env;
}

std::optional<RelayId> SealedEnvelope::outer_hop() const {
  if (seals_.empty()) return std::nullopt;
  return seals_.back().relay;
}

void SealedEnvelope::add_layer(const HopKey& key) {
  const std::size_t depth = seals_.size();
  scramble(body_, key.secret, nonce_, depth);
  seals_.push_back({key.relay, layer_tag(body_, key.secret, nonce_, depth)});
}

void SealedEnvelope::remove_layer(const HopKey& key) {
  if (seals_.empty()) throw OverlayError(Errc::TamperedEnvelope, "no layer left to remove");
  const std::size_t depth = seals_.size() - 1;
  const Seal& outer = seals_.back();
  if (outer.relay != key.relay) {
    throw OverlayError(Errc::TamperedEnvelope, "outer layer belongs to relay " +
                                                   std::to_string(outer.relay) + ", not " +
                                                   std::to_string(key.relay));
  }
  if (outer.tag != layer_tag(body_, key.secret, nonce_, depth)) {
    throw OverlayError(Errc::TamperedEnvelope, "seal tag mismatch at relay " +
                                                   std::to_string(key.relay));
  }
  scramble(body_, key.secret, nonce_, depth);
  seals_.pop_back();
}

const Bytes& SealedEnvelope::plaintext() const {
  if (!seals_.empty()) {
    throw OverlayError(Errc::SealedPayload, std::to_string(seals_.size()) + " layers remain");
  }
  return body_;
}

Bytes SealedEnvelope::serialize() const {
  Bytes out;
  out.reserve(1 + seals_.size() * 12 + body_.size());
  out.push_back(static_cast<char>(seals_.size()));
  for (const auto& s : seals_) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(s.relay >> (8 * i)));
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(s.tag >> (8 * i)));
  }
  out += body_;
  return out;
}

void SealedEnvelope::strip_outer_seal_unsafely() {
  if (!seals_.empty()) seals_.pop_back();
}

// ---------------------------------------------------------------------------

Overlay::Overlay(Directory directory, std::uint64_t seed, bool keep_hop_records)
    : directory_(std::move(directory)), rng_(seed), keep_hop_records_(keep_hop_records) {
  relay_secrets_.reserve(directory_.size());
  for (std::size_t i = 0; i < directory_.size(); ++i) relay_secrets_.push_back(rng_.next());
}

std::optional<CircuitId> Overlay::current_circuit(ClientId client) const {
  auto it = current_.find(client);
  if (it == current_.end()) return std::nullopt;
  return it->second;
}

StreamRecord Overlay::open_stream(ClientId client, const net::Endpoint& destination, AppTag app,
                                  SimTime now) {
  CircuitId cid = 0;
  auto it = current_.find(client);
  if (it != current_.end() && torn_.count(it->second) == 0 &&
      now - circuits_.at(it->second).created_at < kCircuitWindow) {
    cid = it->second;
  } else {
    Circuit c = build_circuit(client, directory_, rng_, next_circuit_++, now);
    cid = c.id;
    circuits_.emplace(cid, c);
    current_[client] = cid;
  }
  StreamRecord s{next_stream_++, cid, destination, now, app};
  streams_.emplace(s.id, s);
  return s;
}

void Overlay::record_hop(const Circuit& c, int position, std::uint64_t message, Direction dir,
                         std::optional<net::Ipv4> client, std::optional<net::Endpoint> dest,
                         const SealedEnvelope& env) {
  if (!keep_hop_records_) return;
  HopRecord r;
  r.relay = c.hops[static_cast<std::size_t>(position)];
  r.position = position;
  r.circuit = c.id;
  r.message = message;
  r.direction = dir;
  r.client_address = client;
  r.destination = dest;
  r.plaintext = env.layers() == 0;
  r.visible = r.plaintext ? env.plaintext() : env.serialize();
  hop_records_.push_back(std::move(r));
}

ExchangeResult Overlay::send_via_circuit(StreamId stream_id, net::Ipv4 client_source,
                                         Bytes payload, SimTime now, const Responder& responder) {
  auto sit = streams_.find(stream_id);
  if (sit == streams_.end()) throw OverlayError(Errc::UnknownStream, std::to_string(stream_id));
  const StreamRecord& stream = sit->second;
  if (torn_.count(stream.circuit) != 0) {
    throw OverlayError(Errc::CircuitTorn, "circuit " + std::to_string(stream.circuit));
  }
  const Circuit& circuit = circuits_.at(stream.circuit);
  const Relay& middle = directory_.relay(circuit.middle());
  const Relay& exit = directory_.relay(circuit.exit());

  ExchangeResult result;
  result.message = next_message_++;
  if (keep_hop_records_) message_plaintext_[result.message][0] = payload;

  // Client seals for exit first, guard last.
  const std::array<HopKey, 3> keys{key_for(circuit.exit()), key_for(circuit.middle()),
                                   key_for(circuit.guard())};
  SealedEnvelope env = SealedEnvelope::seal(std::move(payload), keys, result.message * 2);

  record_hop(circuit, 0, result.message, Direction::Outbound, client_source, std::nullopt, env);
  env.remove_layer(keys[2]);
  record_hop(circuit, 1, result.message, Direction::Outbound, std::nullopt, std::nullopt, env);
  env.remove_layer(keys[1]);
  env.remove_layer(keys[0]);
  record_hop(circuit, 2, result.message, Direction::Outbound, std::nullopt, stream.destination,
             env);

  auto tap = taps_.find(exit.id);
  if (tap != taps_.end()) {
    tap->second.log->append(ExitObservation{next_observation_++, now, exit.id, circuit.id,
                                            stream.id, middle.address, stream.destination,
                                            Direction::Outbound, env.plaintext()});
  }

  std::optional<Bytes> reply =
      responder(Delivery{exit.address, stream.destination, env.plaintext(), now});
  if (!reply) return result;
  result.connected = true;

  if (tap != taps_.end()) {
    ExitObservation inbound{next_observation_++, now,     exit.id, circuit.id,
                            stream.id,           middle.address, stream.destination,
                            Direction::Inbound,  *reply};
    if (tap->second.rewriter) {
      if (auto replaced = tap->second.rewriter(inbound)) reply = std::move(*replaced);
    }
    tap->second.log->append(std::move(inbound));
  }

  if (keep_hop_records_) message_plaintext_[result.message][1] = *reply;
  SealedEnvelope back = SealedEnvelope::plain(std::move(*reply), result.message * 2 + 1);
  record_hop(circuit, 2, result.message, Direction::Inbound, std::nullopt, stream.destination,
             back);
  back.add_layer(keys[0]);
  back.add_layer(keys[1]);
  record_hop(circuit, 1, result.message, Direction::Inbound, std::nullopt, std::nullopt, back);
  back.add_layer(keys[2]);
  record_hop(circuit, 0, result.message, Direction::Inbound, client_source, std::nullopt, back);

  // Client side: peel all three.
  back.remove_layer(keys[2]);
  back.remove_layer(keys[1]);
  back.remove_layer(keys[0]);
  result.reply = back.plaintext();
  return result;
}

InstrumentHandle Overlay::instrument_exit(RelayId relay, ObservationLog& recorder,
                                          Rewriter rewriter) {
  if (relay >= directory_.size() || !directory_.relay(relay).has(kExit)) {
    throw OverlayError(Errc::NotAnExit, "relay " + std::to_string(relay));
  }
  taps_[relay] = Tap{&recorder, std::move(rewriter)};
  return {relay};
}

void Overlay::remove_instrumentation(InstrumentHandle handle) { taps_.erase(handle.relay); }

void Overlay::tear_down(CircuitId circuit) {
  torn_.insert(circuit);
  for (auto it = current_.begin(); it != current_.end();) {
    it = it->second == circuit ? current_.erase(it) : std::next(it);
  }
}

std::vector<PrivacyViolation> Overlay::audit_privacy() const {
  std::vector<PrivacyViolation> out;
  for (std::size_t i = 0; i < hop_records_.size(); ++i) {
    const HopRecord& r = hop_records_[i];
    if (r.client_address && r.plaintext) {
      out.push_back({i, "client address recorded next to plaintext"});
      continue;
    }
    if (!r.client_address) continue;
    if (directory_.is_relay_address(*r.client_address)) continue;
    auto msg = message_plaintext_.find(r.message);
    if (msg == message_plaintext_.end()) continue;
    const Bytes& plain = msg->second[r.direction == Direction::Outbound ? 0 : 1];
    if (plain.size() < 8) continue;
    if (r.visible.find(plain) != Bytes::npos) {
      out.push_back({i, "plaintext bytes readable in a record holding the client address"});
    }
  }
  return out;
}

}  // namespace exitsim::onion
