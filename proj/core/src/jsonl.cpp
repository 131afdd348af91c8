#include "exitsim/jsonl.hpp"

#include <fstream>

#include "json.hpp"

namespace exitsim::harness {

using nlohmann::json;

namespace {

json parse_object(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw JsonlError(std::string("malformed line: ") + e.what());
  }
  if (!j.is_object()) throw JsonlError("line is not a JSON object");
  return j;
}

template <typename T>
T field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw JsonlError(std::string("missing field \"") + key + "\"");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw JsonlError(std::string("field \"") + key + "\" has the wrong type");
  }
}

net::Ipv4 ip_field(const json& j, const char* key) {
  const auto text = field<std::string>(j, key);
  auto ip = net::Ipv4::parse(text);
  if (!ip) throw JsonlError(std::string("field \"") + key + "\" is not an IPv4 address");
  return *ip;
}

template <typename Fixed>
Fixed hex_field(const json& j, const char* key) {
  auto v = Fixed::from_hex(field<std::string>(j, key));
  if (!v) throw JsonlError(std::string("field \"") + key + "\" is not " +
                           std::to_string(Fixed::size) + " hex bytes");
  return *v;
}

Bytes bytes_field(const json& j, const char* key) {
  auto v = from_hex(field<std::string>(j, key));
  if (!v) throw JsonlError(std::string("field \"") + key + "\" is not hex");
  return *v;
}

std::vector<std::string> exposure_names(std::uint8_t bits) {
  std::vector<std::string> out;
  if (bits & kExposesPayload) out.push_back("PAYLOAD");
  if (bits & kExposesHijack) out.push_back("HIJACK");
  if (bits & kExposesDht) out.push_back("DHT");
  return out;
}

std::uint8_t exposure_bits(const std::vector<std::string>& names) {
  std::uint8_t bits = 0;
  for (const auto& n : names) {
    if (n == "PAYLOAD") bits |= kExposesPayload;
    else if (n == "HIJACK") bits |= kExposesHijack;
    else if (n == "DHT") bits |= kExposesDht;
    else throw JsonlError("unknown exposure \"" + n + "\"");
  }
  return bits;
}

}  // namespace

net::Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw JsonlError("endpoint without port: " + std::string(text));
  auto ip = net::Ipv4::parse(text.substr(0, colon));
  const auto port_text = text.substr(colon + 1);
  std::uint32_t port = 0;
  if (port_text.empty() || port_text.size() > 5) throw JsonlError("bad port in " + std::string(text));
  for (char ch : port_text) {
    if (ch < '0' || ch > '9') throw JsonlError("bad port in " + std::string(text));
    port = port * 10 + static_cast<std::uint32_t>(ch - '0');
  }
  if (!ip || port > 65535) throw JsonlError("bad endpoint " + std::string(text));
  return {*ip, static_cast<std::uint16_t>(port)};
}

// ---------------------------------------------------------------------------

std::string to_line(const onion::ExitObservation& o) {
  json j = json::object();
  j["id"] = o.id;
  j["time_ms"] = o.time;
  j["exit"] = o.exit;
  j["circuit"] = o.circuit;
  j["stream"] = o.stream;
  j["previous_hop"] = o.previous_hop.to_string();
  j["destination"] = o.destination.to_string();
  j["direction"] = onion::to_string(o.direction);
  j["payload_hex"] = to_hex(o.payload);
  return j.dump();
}

onion::ExitObservation observation_from_line(std::string_view line) {
  const json j = parse_object(line);
  onion::ExitObservation o;
  o.id = field<std::uint64_t>(j, "id");
  o.time = field<SimTime>(j, "time_ms");
  o.exit = field<onion::RelayId>(j, "exit");
  o.circuit = field<onion::CircuitId>(j, "circuit");
  o.stream = field<onion::StreamId>(j, "stream");
  o.previous_hop = ip_field(j, "previous_hop");
  o.destination = parse_endpoint(field<std::string>(j, "destination"));
  const auto dir = field<std::string>(j, "direction");
  if (dir == onion::to_string(onion::Direction::Outbound)) {
    o.direction = onion::Direction::Outbound;
  } else if (dir == onion::to_string(onion::Direction::Inbound)) {
    o.direction = onion::Direction::Inbound;
  } else {
    throw JsonlError("unknown direction \"" + dir + "\"");
  }
  o.payload = bytes_field(j, "payload_hex");
  return o;
}

std::string to_line(const actors::AttackerPeerEntry& e) {
  json j = json::object();
  j["id"] = e.id;
  j["time_ms"] = e.time;
  j["source"] = e.source.to_string();
  j["info_hash"] = e.info_hash.to_hex();
  j["peer_id"] = e.peer_id.to_hex();
  return j.dump();
}

actors::AttackerPeerEntry attacker_entry_from_line(std::string_view line) {
  const json j = parse_object(line);
  actors::AttackerPeerEntry e;
  e.id = field<std::uint64_t>(j, "id");
  e.time = field<SimTime>(j, "time_ms");
  e.source = ip_field(j, "source");
  e.info_hash = hex_field<btproto::InfoHash>(j, "info_hash");
  e.peer_id = hex_field<btproto::PeerId>(j, "peer_id");
  return e;
}

std::string to_line(const LedgerRecord& r) {
  json j = json::object();
  j["seq"] = r.seq;
  j["time_ms"] = r.time;
  j["client"] = r.client;
  j["public_ip"] = r.public_ip.to_string();
  j["kind"] = to_string(r.kind);
  j["app"] = to_string(r.app);
  j["circuit"] = r.circuit;
  j["stream"] = r.stream;
  j["exit"] = r.exit ? json(*r.exit) : json(nullptr);
  j["destination"] = r.destination.to_string();
  j["digest"] = r.digest;
  j["exposes"] = exposure_names(r.exposes);
  return j.dump();
}

LedgerRecord ledger_record_from_line(std::string_view line) {
  const json j = parse_object(line);
  LedgerRecord r;
  r.seq = field<std::uint64_t>(j, "seq");
  r.time = field<SimTime>(j, "time_ms");
  r.client = field<onion::ClientId>(j, "client");
  r.public_ip = ip_field(j, "public_ip");
  auto kind = action_from_string(field<std::string>(j, "kind"));
  auto app = application_from_string(field<std::string>(j, "app"));
  if (!kind || !app) throw JsonlError("unknown ledger kind or app");
  r.kind = *kind;
  r.app = *app;
  r.circuit = field<onion::CircuitId>(j, "circuit");
  r.stream = field<onion::StreamId>(j, "stream");
  if (auto it = j.find("exit"); it != j.end() && !it->is_null()) {
    r.exit = field<onion::RelayId>(j, "exit");
  }
  r.destination = parse_endpoint(field<std::string>(j, "destination"));
  r.digest = field<std::string>(j, "digest");
  r.exposes = exposure_bits(field<std::vector<std::string>>(j, "exposes"));
  return r;
}

std::string to_line(const attacks::Finding& f) {
  json evidence = json::object();
  evidence["observations"] = f.evidence.observations;
  evidence["peer_log_entries"] = f.evidence.peer_log_entries;
  json snapshot = json::array();
  for (const auto& ep : f.evidence.dht_snapshot) snapshot.push_back(ep.to_string());
  evidence["dht_snapshot"] = snapshot;
  evidence["info_hash"] = f.evidence.info_hash ? json(f.evidence.info_hash->to_hex()) : json(nullptr);
  evidence["port"] = f.evidence.port ? json(*f.evidence.port) : json(nullptr);

  json candidates = json::array();
  for (const auto& ip : f.candidates) candidates.push_back(ip.to_string());

  json j = json::object();
  j["id"] = f.id;
  j["attack"] = attacks::to_string(f.attack);
  j["circuit"] = f.circuit;
  j["streams"] = f.streams;
  j["claimed_ip"] = f.claimed_ip ? json(f.claimed_ip->to_string()) : json(nullptr);
  j["candidates"] = candidates;
  j["confidence"] = attacks::to_string(f.confidence);
  j["evidence"] = evidence;
  return j.dump();
}

attacks::Finding finding_from_line(std::string_view line) {
  const json j = parse_object(line);
  attacks::Finding f;
  f.id = field<std::uint64_t>(j, "id");
  auto attack = attacks::attack_from_string(field<std::string>(j, "attack"));
  auto confidence = attacks::confidence_from_string(field<std::string>(j, "confidence"));
  if (!attack || !confidence) throw JsonlError("unknown attack or confidence");
  f.attack = *attack;
  f.confidence = *confidence;
  f.circuit = field<onion::CircuitId>(j, "circuit");
  f.streams = field<std::vector<onion::StreamId>>(j, "streams");
  if (auto it = j.find("claimed_ip"); it != j.end() && !it->is_null()) {
    f.claimed_ip = ip_field(j, "claimed_ip");
  }
  for (const auto& c : field<std::vector<std::string>>(j, "candidates")) {
    auto ip = net::Ipv4::parse(c);
    if (!ip) throw JsonlError("bad candidate address " + c);
    f.candidates.push_back(*ip);
  }
  const json ev = field<json>(j, "evidence");
  f.evidence.observations = field<std::vector<std::uint64_t>>(ev, "observations");
  f.evidence.peer_log_entries = field<std::vector<std::uint64_t>>(ev, "peer_log_entries");
  for (const auto& s : field<std::vector<std::string>>(ev, "dht_snapshot")) {
    f.evidence.dht_snapshot.push_back(parse_endpoint(s));
  }
  if (auto it = ev.find("info_hash"); it != ev.end() && !it->is_null()) {
    f.evidence.info_hash = hex_field<btproto::InfoHash>(ev, "info_hash");
  }
  if (auto it = ev.find("port"); it != ev.end() && !it->is_null()) {
    f.evidence.port = field<std::uint16_t>(ev, "port");
  }
  return f;
}

std::string to_line(const attacks::BrowsingProfile& p) {
  json visits = json::array();
  for (const auto& v : p.visits) {
    visits.push_back({{"time_ms", v.time},
                      {"host", v.host.to_string()},
                      {"circuit", v.circuit},
                      {"stream", v.stream},
                      {"observation", v.observation}});
  }
  json j = json::object();
  j["claimed_ip"] = p.claimed_ip.to_string();
  j["visits"] = visits;
  j["source_findings"] = p.source_findings;
  return j.dump();
}

attacks::BrowsingProfile profile_from_line(std::string_view line) {
  const json j = parse_object(line);
  attacks::BrowsingProfile p;
  p.claimed_ip = ip_field(j, "claimed_ip");
  for (const auto& v : field<json>(j, "visits")) {
    attacks::ProfileVisit visit;
    visit.time = field<SimTime>(v, "time_ms");
    visit.host = parse_endpoint(field<std::string>(v, "host"));
    visit.circuit = field<onion::CircuitId>(v, "circuit");
    visit.stream = field<onion::StreamId>(v, "stream");
    visit.observation = field<std::uint64_t>(v, "observation");
    p.visits.push_back(visit);
  }
  p.source_findings = field<std::vector<std::uint64_t>>(j, "source_findings");
  return p;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw JsonlError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace exitsim::harness
