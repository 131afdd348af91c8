#include "exitsim/btproto.hpp"

#include <charconv>

namespace exitsim::btproto {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::MissingField: return "MissingField";
    case Errc::BadLength: return "BadLength";
    case Errc::BadPort: return "BadPort";
    case Errc::BadIpLiteral: return "BadIpLiteral";
    case Errc::BadPeersLength: return "BadPeersLength";
    case Errc::BadProtocolString: return "BadProtocolString";
    case Errc::BadAddressLength: return "BadAddressLength";
    case Errc::BadFrame: return "BadFrame";
    case Errc::BadField: return "BadField";
  }
  return "Unknown";
}

ProtoError::ProtoError(Errc code, const std::string& detail)
    : std::runtime_error(std::string("btproto: ") + to_string(code) + ": " + detail),
      code_(code) {}

const char* to_string(AnnounceEvent e) {
  switch (e) {
    case AnnounceEvent::None: return "";
    case AnnounceEvent::Started: return "started";
    case AnnounceEvent::Stopped: return "stopped";
    case AnnounceEvent::Completed: return "completed";
  }
  return "";
}

namespace {

bool unreserved(unsigned char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '-' || c == '.' || c == '_' || c == '~';
}

template <class T>
std::optional<T> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

void put_u32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

std::uint32_t get_u32(BytesView in) {
  const auto* u = reinterpret_cast<const unsigned char*>(in.data());
  return (std::uint32_t{u[0]} << 24) | (std::uint32_t{u[1]} << 16) |
         (std::uint32_t{u[2]} << 8) | std::uint32_t{u[3]};
}

}  // namespace

std::string percent_encode(BytesView raw) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(raw.size() * 3);
  for (unsigned char c : raw) {
    if (unreserved(c)) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::optional<Bytes> percent_decode(std::string_view text) {
  Bytes out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '%') {
      out.push_back(text[i]);
      continue;
    }
    if (i + 2 >= text.size()) return std::nullopt;
    auto pair = from_hex(text.substr(i + 1, 2));
    if (!pair || pair->size() != 1) return std::nullopt;
    out += *pair;
    i += 2;
  }
  return out;
}

std::string build_announce_query(const AnnounceRequest& req) {
  std::string q;
  auto add = [&q](std::string_view key, std::string_view value) {
    if (!q.empty()) q += '&';
    q += key;
    q += '=';
    q += value;
  };
  add("info_hash", percent_encode(req.info_hash.to_bytes()));
  add("peer_id", percent_encode(req.peer_id.to_bytes()));
  add("port", std::to_string(req.port));
  add("uploaded", std::to_string(req.uploaded));
  add("downloaded", std::to_string(req.downloaded));
  add("left", std::to_string(req.left));
  if (req.event != AnnounceEvent::None) add("event", to_string(req.event));
  if (req.ip) add("ip", req.ip->to_string());
  add("compact", req.compact ? "1" : "0");
  if (req.numwant) add("numwant", std::to_string(*req.numwant));
  for (const auto& [key, value] : req.extra) add(percent_encode(key), percent_encode(value));
  return q;
}

AnnounceRequest parse_announce_query(std::string_view query) {
  AnnounceRequest req;
  req.compact = false;
  bool have_hash = false, have_id = false, have_port = false;

  std::size_t pos = 0;
  while (pos <= query.size()) {
    std::size_t amp = query.find('&', pos);
    if (amp == std::string_view::npos) amp = query.size();
    const std::string_view pair = query.substr(pos, amp - pos);
    pos = amp + 1;
    if (pair.empty()) continue;

    const std::size_t eq = pair.find('=');
    const auto key = percent_decode(pair.substr(0, eq));
    const auto value = percent_decode(eq == std::string_view::npos ? std::string_view{}
                                                                  : pair.substr(eq + 1));
    if (!key || !value) throw ProtoError(Errc::BadField, "malformed percent-escape");

    if (*key == "info_hash") {
      auto h = InfoHash::from_bytes(*value);
      if (!h) throw ProtoError(Errc::BadLength, "info_hash must be 20 bytes");
      req.info_hash = *h;
      have_hash = true;
    } else if (*key == "peer_id") {
      auto id = PeerId::from_bytes(*value);
      if (!id) throw ProtoError(Errc::BadLength, "peer_id must be 20 bytes");
      req.peer_id = *id;
      have_id = true;
    } else if (*key == "port") {
      auto p = parse_decimal<std::int64_t>(*value);
      if (!p || !net::valid_port(*p)) throw ProtoError(Errc::BadPort, "port '" + *value + "'");
      req.port = static_cast<std::uint16_t>(*p);
      have_port = true;
    } else if (*key == "uploaded" || *key == "downloaded" || *key == "left") {
      auto n = parse_decimal<std::uint64_t>(*value);
      if (!n) throw ProtoError(Errc::BadField, *key + " '" + *value + "'");
      (*key == "uploaded" ? req.uploaded : *key == "downloaded" ? req.downloaded : req.left) = *n;
    } else if (*key == "event") {
      if (value->empty()) req.event = AnnounceEvent::None;
      else if (*value == "started") req.event = AnnounceEvent::Started;
      else if (*value == "stopped") req.event = AnnounceEvent::Stopped;
      else if (*value == "completed") req.event = AnnounceEvent::Completed;
      else throw ProtoError(Errc::BadField, "event '" + *value + "'");
    } else if (*key == "ip") {
      auto ip = net::Ipv4::parse(*value);
      if (!ip) throw ProtoError(Errc::BadIpLiteral, "ip '" + *value + "'");
      req.ip = *ip;
    } else if (*key == "compact") {
      req.compact = (*value == "1");
    } else if (*key == "numwant") {
      auto n = parse_decimal<std::int64_t>(*value);
      if (!n) throw ProtoError(Errc::BadField, "numwant '" + *value + "'");
      req.numwant = *n;
    } else {
      req.extra.emplace_back(*key, *value);
    }
  }

  if (!have_hash) throw ProtoError(Errc::MissingField, "info_hash");
  if (!have_id) throw ProtoError(Errc::MissingField, "peer_id");
  if (!have_port) throw ProtoError(Errc::MissingField, "port");
  return req;
}

// ---------------------------------------------------------------------------

std::array<std::uint8_t, kCompactPeerSize> encode_compact_peer(const PeerEndpoint& p) {
  const std::uint32_t ip = p.ip.value();
  return {static_cast<std::uint8_t>(ip >> 24), static_cast<std::uint8_t>(ip >> 16),
          static_cast<std::uint8_t>(ip >> 8),  static_cast<std::uint8_t>(ip),
          static_cast<std::uint8_t>(p.port >> 8), static_cast<std::uint8_t>(p.port)};
}

PeerEndpoint decode_compact_peer(BytesView raw) {
  if (raw.size() != kCompactPeerSize) {
    throw ProtoError(Errc::BadLength, "compact peer needs 6 bytes, got " +
                                          std::to_string(raw.size()));
  }
  const auto* u = reinterpret_cast<const unsigned char*>(raw.data());
  return {net::Ipv4(get_u32(raw)),
          static_cast<std::uint16_t>((std::uint16_t{u[4]} << 8) | u[5])};
}

Bytes encode_compact_peers(std::span<const PeerEndpoint> peers) {
  Bytes out;
  out.reserve(peers.size() * kCompactPeerSize);
  for (const auto& p : peers) {
    const auto b = encode_compact_peer(p);
    out.append(reinterpret_cast<const char*>(b.data()), b.size());
  }
  return out;
}

std::vector<PeerEndpoint> decode_compact_peers(BytesView blob) {
  if (blob.size() % kCompactPeerSize != 0) {
    throw ProtoError(Errc::BadPeersLength,
                     std::to_string(blob.size()) + " bytes is not a multiple of 6");
  }
  std::vector<PeerEndpoint> out;
  out.reserve(blob.size() / kCompactPeerSize);
  for (std::size_t i = 0; i < blob.size(); i += kCompactPeerSize) {
    out.push_back(decode_compact_peer(blob.substr(i, kCompactPeerSize)));
  }
  return out;
}

Bytes build_announce_response(const AnnounceResponse& resp, PeerEncoding encoding) {
  bencode::Dict d;
  d["interval"] = resp.interval;
  if (resp.complete) d["complete"] = *resp.complete;
  if (resp.incomplete) d["incomplete"] = *resp.incomplete;
  if (encoding == PeerEncoding::Compact) {
    d["peers"] = encode_compact_peers(resp.peers);
  } else {
    bencode::List peers;
    for (const auto& p : resp.peers) {
      bencode::Dict entry;
      entry["ip"] = p.ip.to_string();
      entry["port"] = bencode::Integer{p.port};
      peers.emplace_back(std::move(entry));
    }
    d["peers"] = std::move(peers);
  }
  return bencode::encode(d);
}

Bytes build_announce_response(std::span<const PeerEndpoint> peers, std::int64_t interval,
                              bool compact) {
  AnnounceResponse resp;
  resp.interval = interval;
  resp.peers.assign(peers.begin(), peers.end());
  resp.complete = 0;
  resp.incomplete = static_cast<std::int64_t>(peers.size());
  return build_announce_response(resp, compact ? PeerEncoding::Compact : PeerEncoding::Dictionary);
}

AnnounceResponse parse_announce_response(BytesView body) {
  const auto decoded = bencode::decode(body, bencode::Mode::Lenient);
  if (!decoded.value.is_dict()) throw ProtoError(Errc::BadFrame, "response is not a dictionary");
  const auto& v = decoded.value;

  if (const auto* failure = v.find("failure reason"); failure && failure->is_string()) {
    throw ProtoError(Errc::BadField, "tracker failure: " + failure->as_string());
  }

  AnnounceResponse resp;
  const auto* interval = v.find("interval");
  if (!interval) throw ProtoError(Errc::MissingField, "interval");
  if (!interval->is_int() || interval->as_int() <= 0) {
    throw ProtoError(Errc::BadField, "interval must be a positive integer");
  }
  resp.interval = interval->as_int();

  if (const auto* c = v.find("complete"); c && c->is_int()) resp.complete = c->as_int();
  if (const auto* c = v.find("incomplete"); c && c->is_int()) resp.incomplete = c->as_int();

  if (const auto* peers = v.find("peers")) {
    if (peers->is_string()) {
      resp.peers = decode_compact_peers(peers->as_string());
    } else if (peers->is_list()) {
      for (const auto& entry : peers->as_list()) {
        const auto* ip = entry.find("ip");
        const auto* port = entry.find("port");
        if (!ip || !port || !ip->is_string() || !port->is_int()) {
          throw ProtoError(Errc::BadField, "peer entry needs ip and port");
        }
        auto addr = net::Ipv4::parse(ip->as_string());
        if (!addr) throw ProtoError(Errc::BadIpLiteral, "peer ip '" + ip->as_string() + "'");
        if (port->as_int() < 0 || port->as_int() > 65535) {
          throw ProtoError(Errc::BadPort, "peer port " + std::to_string(port->as_int()));
        }
        resp.peers.push_back({*addr, static_cast<std::uint16_t>(port->as_int())});
      }
    } else {
      throw ProtoError(Errc::BadField, "peers must be a string or list");
    }
  }
  return resp;
}

bool response_is_compact(BytesView body) {
  try {
    const auto decoded = bencode::decode(body, bencode::Mode::Lenient);
    const auto* peers = decoded.value.find("peers");
    return peers == nullptr || peers->is_string();
  } catch (const bencode::DecodeError&) {
    return true;
  }
}

// ---------------------------------------------------------------------------

Bytes build_handshake(const PeerHandshake& hs) {
  Bytes out;
  out.reserve(kHandshakeSize);
  out.push_back(static_cast<char>(kProtocolString.size()));
  out += kProtocolString;
  out.append(reinterpret_cast<const char*>(hs.reserved.data()), hs.reserved.size());
  out += hs.info_hash.to_bytes();
  out += hs.peer_id.to_bytes();
  return out;
}

PeerHandshake parse_handshake(BytesView frame) {
  if (frame.empty() || static_cast<unsigned char>(frame[0]) != kProtocolString.size()) {
    throw ProtoError(Errc::BadProtocolString, "length byte must be 19");
  }
  if (frame.size() < 1 + kProtocolString.size() ||
      frame.substr(1, kProtocolString.size()) != kProtocolString) {
    throw ProtoError(Errc::BadProtocolString, "expected 'BitTorrent protocol'");
  }
  if (frame.size() != kHandshakeSize) {
    throw ProtoError(Errc::BadLength, "handshake is 68 bytes, got " + std::to_string(frame.size()));
  }
  PeerHandshake hs;
  for (std::size_t i = 0; i < 8; ++i) hs.reserved[i] = static_cast<std::uint8_t>(frame[20 + i]);
  hs.info_hash = *InfoHash::from_bytes(frame.substr(28, 20));
  hs.peer_id = *PeerId::from_bytes(frame.substr(48, 20));
  return hs;
}

Bytes build_extended_handshake(const ExtendedHandshake& ext) {
  bencode::Dict d = ext.other;
  if (ext.port) d["p"] = bencode::Integer{*ext.port};
  if (ext.version) d["v"] = *ext.version;
  if (ext.yourip) d["yourip"] = ext.yourip->to_bytes();
  if (ext.ipv4) d["ipv4"] = ext.ipv4->to_bytes();
  const Bytes payload = bencode::encode(d);

  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(payload.size() + 2));
  out.push_back(static_cast<char>(kExtendedMessageId));
  out.push_back(0);
  out += payload;
  return out;
}

ExtendedHandshake parse_extended_payload(BytesView payload) {
  auto decoded = bencode::decode(payload, bencode::Mode::Lenient);
  if (!decoded.value.is_dict()) throw ProtoError(Errc::BadFrame, "payload is not a dictionary");

  ExtendedHandshake ext;
  for (auto& [key, value] : decoded.value.as_dict()) {
    if (key == "p" && value.is_int() && net::valid_port(value.as_int())) {
      ext.port = static_cast<std::uint16_t>(value.as_int());
    } else if (key == "v" && value.is_string()) {
      ext.version = value.as_string();
    } else if ((key == "yourip" || key == "ipv4") && value.is_string()) {
      auto ip = net::Ipv4::from_bytes(value.as_string());
      if (!ip) {
        throw ProtoError(Errc::BadAddressLength,
                         key + " has " + std::to_string(value.as_string().size()) + " bytes");
      }
      (key == "yourip" ? ext.yourip : ext.ipv4) = *ip;
    } else {
      ext.other.emplace(key, std::move(value));
    }
  }
  return ext;
}

ExtendedHandshake parse_extended_handshake(BytesView frame) {
  if (frame.size() < 6) throw ProtoError(Errc::BadLength, "extended frame shorter than 6 bytes");
  const std::uint32_t len = get_u32(frame);
  if (len != frame.size() - 4) {
    throw ProtoError(Errc::BadLength, "length prefix " + std::to_string(len) + " but " +
                                          std::to_string(frame.size() - 4) + " bytes follow");
  }
  if (static_cast<unsigned char>(frame[4]) != kExtendedMessageId || frame[5] != 0) {
    throw ProtoError(Errc::BadFrame, "not an extended handshake (id 20, ext id 0)");
  }
  return parse_extended_payload(frame.substr(6));
}

PeerWireOpening parse_peer_wire_opening(BytesView bytes) {
  if (bytes.size() < kHandshakeSize) {
    // let parse_handshake pick the precise error
    return {parse_handshake(bytes), std::nullopt};
  }
  PeerWireOpening out{parse_handshake(bytes.substr(0, kHandshakeSize)), std::nullopt};
  const BytesView rest = bytes.substr(kHandshakeSize);
  if (!rest.empty()) out.extended = parse_extended_handshake(rest);
  return out;
}

// ---------------------------------------------------------------------------

const char* to_string(FrameKind k) {
  switch (k) {
    case FrameKind::AnnounceQuery: return "announce-query";
    case FrameKind::AnnounceResponse: return "announce-response";
    case FrameKind::PeerWire: return "peer-wire";
    case FrameKind::ExtendedHandshake: return "extended-handshake";
    case FrameKind::Bencoded: return "bencoded";
    case FrameKind::Unknown: return "unknown";
  }
  return "unknown";
}

FrameKind classify(BytesView bytes) {
  if (bytes.empty()) return FrameKind::Unknown;
  if (static_cast<unsigned char>(bytes[0]) == kProtocolString.size() &&
      bytes.substr(1, kProtocolString.size()) == kProtocolString) {
    return FrameKind::PeerWire;
  }
  if (bytes.size() >= 6 && static_cast<unsigned char>(bytes[4]) == kExtendedMessageId &&
      bytes[5] == 0 && get_u32(bytes) == bytes.size() - 4) {
    return FrameKind::ExtendedHandshake;
  }
  if (bytes.find("info_hash=") != BytesView::npos && bytes.find(' ') == BytesView::npos) {
    return FrameKind::AnnounceQuery;
  }
  if (bytes[0] == 'd' || bytes[0] == 'l' || bytes[0] == 'i' || (bytes[0] >= '0' && bytes[0] <= '9')) {
    if (bytes[0] == 'd' && bytes.find("8:interval") != BytesView::npos) {
      return FrameKind::AnnounceResponse;
    }
    return FrameKind::Bencoded;
  }
  return FrameKind::Unknown;
}

}  // namespace exitsim::btproto
