#include "exitsim/inspect.hpp"

#include <fstream>
#include <sstream>

#include "exitsim/bencode.hpp"
#include "exitsim/btproto.hpp"
#include "exitsim/dht.hpp"

namespace exitsim::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool printable(std::string_view s) {
  for (unsigned char c : s) {
    if (c < 0x20 || c > 0x7e) return false;
  }
  return true;
}

std::string text_or_hex(std::string_view s) {
  return printable(s) ? std::string(s) : "0x" + to_hex(s);
}

using Fields = std::vector<std::pair<std::string, std::string>>;

void flatten(const bencode::Value& v, const std::string& path, Fields& out) {
  auto key = [&](const std::string& child) { return path.empty() ? child : path + "." + child; };
  switch (v.kind()) {
    case bencode::Value::Kind::Integer:
      out.emplace_back(path.empty() ? "value" : path, std::to_string(v.as_int()));
      break;
    case bencode::Value::Kind::String:
      out.emplace_back(path.empty() ? "value" : path, text_or_hex(v.as_string()));
      break;
    case bencode::Value::Kind::List:
      out.emplace_back(key("length"), std::to_string(v.as_list().size()));
      for (std::size_t i = 0; i < v.as_list().size(); ++i) {
        flatten(v.as_list()[i], key(std::to_string(i)), out);
      }
      break;
    case bencode::Value::Kind::Dict:
      out.emplace_back(key("keys"), std::to_string(v.as_dict().size()));
      for (const auto& [k, item] : v.as_dict()) flatten(item, key(text_or_hex(k)), out);
      break;
  }
}

const char* type_name(const bencode::Value& v) {
  switch (v.kind()) {
    case bencode::Value::Kind::Integer: return "integer";
    case bencode::Value::Kind::String: return "string";
    case bencode::Value::Kind::List: return "list";
    case bencode::Value::Kind::Dict: return "dict";
  }
  return "";
}

void add_peers(const std::vector<btproto::PeerEndpoint>& peers, Fields& out) {
  out.emplace_back("peers.count", std::to_string(peers.size()));
  for (std::size_t i = 0; i < peers.size(); ++i) {
    out.emplace_back("peers." + std::to_string(i), peers[i].to_string());
  }
}

void add_extended(const btproto::ExtendedHandshake& ext, const std::string& prefix, Fields& out) {
  if (ext.port) out.emplace_back(prefix + "p", std::to_string(*ext.port));
  if (ext.version) out.emplace_back(prefix + "v", text_or_hex(*ext.version));
  if (ext.yourip) out.emplace_back(prefix + "yourip", ext.yourip->to_string());
  if (ext.ipv4) out.emplace_back(prefix + "ipv4", ext.ipv4->to_string());
  for (const auto& [k, v] : ext.other) flatten(v, prefix + text_or_hex(k), out);
}

Inspection decode_as(BytesView bytes, const std::string& format) {
  Inspection r;
  r.kind = format;
  auto& f = r.fields;
  if (format == "bencode") {
    const auto decoded = bencode::decode(bytes, bencode::Mode::Lenient);
    f.emplace_back("type", type_name(decoded.value));
    f.emplace_back("canonical", decoded.canonical ? "true" : "false");
    flatten(decoded.value, "", f);
  } else if (format == "announce-query") {
    const auto q = btproto::parse_announce_query(bytes);
    f.emplace_back("info_hash", q.info_hash.to_hex());
    f.emplace_back("peer_id", text_or_hex(q.peer_id.to_bytes()));
    f.emplace_back("port", std::to_string(q.port));
    f.emplace_back("uploaded", std::to_string(q.uploaded));
    f.emplace_back("downloaded", std::to_string(q.downloaded));
    f.emplace_back("left", std::to_string(q.left));
    if (q.event != btproto::AnnounceEvent::None) f.emplace_back("event", btproto::to_string(q.event));
    if (q.ip) f.emplace_back("ip", q.ip->to_string());
    f.emplace_back("compact", q.compact ? "1" : "0");
    if (q.numwant) f.emplace_back("numwant", std::to_string(*q.numwant));
    for (const auto& [k, v] : q.extra) f.emplace_back(k, text_or_hex(v));
  } else if (format == "announce-response") {
    const auto resp = btproto::parse_announce_response(bytes);
    f.emplace_back("interval", std::to_string(resp.interval));
    if (resp.complete) f.emplace_back("complete", std::to_string(*resp.complete));
    if (resp.incomplete) f.emplace_back("incomplete", std::to_string(*resp.incomplete));
    f.emplace_back("encoding", btproto::response_is_compact(bytes) ? "compact" : "dictionary");
    add_peers(resp.peers, f);
  } else if (format == "compact-peers") {
    add_peers(btproto::decode_compact_peers(bytes), f);
  } else if (format == "peer-wire") {
    const auto opening = btproto::parse_peer_wire_opening(bytes);
    f.emplace_back("info_hash", opening.handshake.info_hash.to_hex());
    f.emplace_back("peer_id", text_or_hex(opening.handshake.peer_id.to_bytes()));
    f.emplace_back("extension_supported", opening.handshake.extension_supported() ? "true" : "false");
    f.emplace_back("extended", opening.extended ? "true" : "false");
    if (opening.extended) add_extended(*opening.extended, "ext.", f);
  } else if (format == "extended-handshake") {
    add_extended(btproto::parse_extended_handshake(bytes), "", f);
  } else if (format == "krpc") {
    const auto m = dht::decode_krpc(bytes);
    f.emplace_back("transaction", to_hex(m.transaction));
    f.emplace_back("type", m.kind == dht::KrpcKind::Query      ? "query"
                           : m.kind == dht::KrpcKind::Response ? "response"
                                                               : "error");
    if (m.method) f.emplace_back("method", dht::to_string(*m.method));
    if (m.kind == dht::KrpcKind::Error) {
      f.emplace_back("error_code", std::to_string(m.error_code));
      f.emplace_back("error_message", m.error_message);
    }
    for (const auto& [k, v] : m.body) flatten(v, text_or_hex(k), f);
  } else {
    throw std::invalid_argument("unknown fixture format \"" + format + "\"");
  }
  return r;
}

std::string auto_format(BytesView bytes) {
  switch (btproto::classify(bytes)) {
    case btproto::FrameKind::AnnounceQuery: return "announce-query";
    case btproto::FrameKind::AnnounceResponse: return "announce-response";
    case btproto::FrameKind::PeerWire: return "peer-wire";
    case btproto::FrameKind::ExtendedHandshake: return "extended-handshake";
    case btproto::FrameKind::Bencoded: {
      // KRPC messages carry a "y" key; everything else is plain bencode.
      if (bytes.find("1:y1:") != BytesView::npos) return "krpc";
      return "bencode";
    }
    case btproto::FrameKind::Unknown: break;
  }
  return "bencode";
}

}  // namespace

Fixture parse_fixture(const std::string& text) {
  Fixture fx;
  std::string hex;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string body = trim(std::string_view(t).substr(1));
      if (body.rfind("expect:", 0) == 0) {
        const std::string kv = trim(std::string_view(body).substr(7));
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("expect line without '=': " + t);
        fx.expect.emplace_back(trim(std::string_view(kv).substr(0, eq)),
                               trim(std::string_view(kv).substr(eq + 1)));
      } else if (body.rfind("format:", 0) == 0) {
        fx.format = trim(std::string_view(body).substr(7));
      }
      continue;
    }
    hex += t;
  }
  auto raw = from_hex(hex);
  if (!raw) throw std::invalid_argument("fixture body is not hex");
  fx.bytes = std::move(*raw);
  return fx;
}

Fixture load_fixture(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_fixture(text.str());
}

const std::string* Inspection::find(std::string_view key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return &v;
  }
  return nullptr;
}

Inspection inspect_frame(BytesView bytes, const std::string& format) {
  const std::string chosen = format == "auto" ? auto_format(bytes) : format;
  auto failure = [&](const std::string& code, const std::string& message) {
    Inspection r;
    r.kind = "error";
    r.fields = {{"format", chosen}, {"error", code}, {"message", message}};
    return r;
  };
  try {
    return decode_as(bytes, chosen);
  } catch (const bencode::DecodeError& e) {
    return failure(bencode::to_string(e.code()), e.what());
  } catch (const btproto::ProtoError& e) {
    return failure(btproto::to_string(e.code()), e.what());
  } catch (const dht::DhtError& e) {
    return failure(dht::to_string(e.code()), e.what());
  }
}

std::string render(const Inspection& inspection) {
  std::string out = "kind: " + inspection.kind + "\n";
  for (const auto& [k, v] : inspection.fields) out += "  " + k + " = " + v + "\n";
  return out;
}

}  // namespace exitsim::harness
