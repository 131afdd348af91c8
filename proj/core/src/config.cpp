#include "exitsim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace exitsim::harness {

using nlohmann::json;

namespace {

std::string join_lines(const std::vector<std::string>& problems) {
  std::string out = "invalid scenario config";
  for (const auto& p : problems) out += "\n  " + p;
  return out;
}

/// Reads one JSON object, remembering which keys were consumed so leftovers
/// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path, std::vector<std::string>& problems)
      : node_(node), path_(std::move(path)), problems_(problems) {
    if (!node_.is_object()) problem(path_.empty() ? "<root>" : path_, "must be an object");
  }

  template <typename T>
  void integer(const char* key, T& out, std::int64_t lo, std::int64_t hi) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_number_integer()) return problem(where(key), "must be an integer");
    std::int64_t x = 0;
    if (v->is_number_unsigned()) {
      const auto u = v->get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(hi)) return problem(where(key), range_text(lo, hi));
      x = static_cast<std::int64_t>(u);
    } else {
      x = v->get<std::int64_t>();
    }
    if (x < lo || x > hi) return problem(where(key), range_text(lo, hi));
    out = static_cast<T>(x);
  }

  void seed(const char* key, std::uint64_t& out) {
    const json* v = take(key);
    if (!v) return;
    if (v->is_number_unsigned()) {
      out = v->get<std::uint64_t>();
    } else if (v->is_number_integer() && v->get<std::int64_t>() >= 0) {
      out = static_cast<std::uint64_t>(v->get<std::int64_t>());
    } else {
      problem(where(key), "must be a non-negative integer");
    }
  }

  void number(const char* key, double& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_number()) return problem(where(key), "must be a number");
    out = v->get<double>();
  }

  /// Seconds in the file, milliseconds in memory.
  void duration(const char* key, SimTime& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_number()) return problem(where(key), "must be a number of seconds");
    const double s = v->get<double>();
    if (!std::isfinite(s) || s < 0 || s > 1e9) {
      return problem(where(key), "must be between 0 and 1e9 seconds");
    }
    out = static_cast<SimTime>(std::llround(s * kMillisPerSecond));
  }

  void boolean(const char* key, bool& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_boolean()) return problem(where(key), "must be true or false");
    out = v->get<bool>();
  }

  const json* object(const char* key) {
    const json* v = take(key);
    if (v && !v->is_object()) {
      problem(where(key), "must be an object");
      return nullptr;
    }
    return v;
  }

  const json* take(const char* key) {
    if (!node_.is_object()) return nullptr;
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void problem(const std::string& field, const std::string& what) {
    problems_.push_back(field + ": " + what);
  }

  void finish() {
    if (!node_.is_object()) return;
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (seen_.count(it.key()) == 0) problem(where(it.key()), "unknown key");
    }
  }

 private:
  static std::string range_text(std::int64_t lo, std::int64_t hi) {
    return "must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
  }

  const json& node_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

constexpr std::int64_t kU32Max = 0xFFFFFFFF;

json seconds_json(SimTime ms) {
  if (ms % kMillisPerSecond == 0) return ms / kMillisPerSecond;
  return static_cast<double>(ms) / kMillisPerSecond;
}

}  // namespace

InvalidConfig::InvalidConfig(std::vector<std::string> problems)
    : std::runtime_error(join_lines(problems)), problems_(std::move(problems)) {}

ScenarioConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidConfig({std::string("<root>: not valid JSON (") + e.what() + ")"});
  }

  std::vector<std::string> problems;
  ScenarioConfig c;
  ObjectReader r(root, "", problems);

  if (const json* schema = r.take("schema")) {
    if (!schema->is_number_integer() || schema->get<std::int64_t>() != kSchemaVersion) {
      r.problem("schema", "must be " + std::to_string(kSchemaVersion));
    }
  } else if (root.is_object()) {
    r.problem("schema", "is required");
  }
  r.seed("seed", c.seed);
  r.duration("duration", c.duration);
  r.integer("clients", c.clients, 0, 100000);
  r.duration("announce_period", c.announce_period);
  r.integer("max_peer_connections", c.max_peer_connections, 0, 1000);

  if (const json* node = r.object("relays")) {
    ObjectReader rr(*node, "relays", problems);
    rr.integer("guards", c.guards, 0, 100000);
    rr.integer("middles", c.middles, 0, 100000);
    rr.integer("exits", c.exits, 0, 100000);
    rr.finish();
  }

  if (const json* node = r.object("profile")) {
    ObjectReader pr(*node, "profile", problems);
    if (const json* modes = pr.object("usage_modes")) {
      ObjectReader mr(*modes, "profile.usage_modes", problems);
      mr.number("TRACKER_VIA_TOR", c.usage.tracker_via_tor);
      mr.number("PEERS_VIA_TOR", c.usage.peers_via_tor);
      mr.number("BOTH", c.usage.both);
      mr.finish();
    }
    pr.number("announce_includes_ip", c.announce_includes_ip);
    pr.number("exthandshake_includes_ip", c.exthandshake_includes_ip);
    pr.number("dht_enabled", c.dht_enabled);
    pr.integer("torrents_per_client", c.torrents_per_client, 0, 10000);
    if (const json* pool = pr.take("port_pool")) {
      if (!pool->is_array()) {
        pr.problem("profile.port_pool", "must be an array of ports");
      } else {
        c.port_pool.clear();
        for (const auto& p : *pool) {
          if (!p.is_number_integer() || p.get<std::int64_t>() < 1 || p.get<std::int64_t>() > 65535) {
            pr.problem("profile.port_pool", "entries must be integers in [1, 65535]");
            break;
          }
          c.port_pool.push_back(static_cast<std::uint16_t>(p.get<std::int64_t>()));
        }
      }
    }
    pr.boolean("unique_ports", c.unique_ports);
    pr.finish();
  }

  if (const json* node = r.object("torrents")) {
    ObjectReader tr(*node, "torrents", problems);
    tr.integer("catalog_size", c.catalog_size, 0, 1000000);
    tr.number("zipf_s", c.zipf_s);
    tr.finish();
  }

  if (const json* node = r.object("attacker")) {
    ObjectReader ar(*node, "attacker", problems);
    if (const json* exits = ar.take("instrumented_exits")) {
      if (exits->is_string() && exits->get<std::string>() == "all") {
        c.attacker.instrumented_exits.reset();
      } else if (exits->is_array()) {
        std::vector<std::uint32_t> ids;
        for (const auto& e : *exits) {
          if (!e.is_number_integer() || e.get<std::int64_t>() < 0 || e.get<std::int64_t>() > kU32Max) {
            ar.problem("attacker.instrumented_exits", "entries must be non-negative exit indices");
            break;
          }
          ids.push_back(static_cast<std::uint32_t>(e.get<std::int64_t>()));
        }
        c.attacker.instrumented_exits = ids;
      } else {
        ar.problem("attacker.instrumented_exits", "must be \"all\" or an array of exit indices");
      }
    }
    if (const json* policy = ar.take("rewrite_policy")) {
      auto p = policy->is_string() ? attacks::rewrite_policy_from_string(policy->get<std::string>())
                                   : std::nullopt;
      if (p) {
        c.attacker.rewrite_policy = *p;
      } else {
        ar.problem("attacker.rewrite_policy", "must be \"replace-all\" or \"prepend\"");
      }
    }
    ar.duration("linkage_window", c.attacker.linkage_window);
    ar.boolean("payload_enabled", c.attacker.payload_enabled);
    ar.boolean("hijack_enabled", c.attacker.hijack_enabled);
    ar.boolean("prober_enabled", c.attacker.prober_enabled);
    ar.boolean("profile_include_ambiguous", c.attacker.profile_include_ambiguous);
    ar.boolean("include_payload_in_headline", c.attacker.include_payload_in_headline);
    ar.finish();
  }

  if (const json* node = r.object("web")) {
    ObjectReader wr(*node, "web", problems);
    wr.integer("hosts", c.web_hosts, 0, 65000);
    wr.number("visits_per_hour", c.web_visits_per_hour);
    wr.finish();
  }

  if (const json* node = r.object("dht")) {
    ObjectReader dr(*node, "dht", problems);
    dr.integer("nodes", c.dht_nodes, 0, 65000);
    dr.finish();
  }
  r.finish();

  // Fields the reader rejected keep their defaults, so semantic checks on
  // the rest still run and every problem is reported in one go.
  try {
    validate(c);
  } catch (const InvalidConfig& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (!problems.empty()) throw InvalidConfig(std::move(problems));
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig({path + ": cannot open"});
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void validate(const ScenarioConfig& c) {
  std::vector<std::string> problems;
  auto probability = [&](const char* field, double p) {
    if (!(p >= 0.0 && p <= 1.0)) problems.push_back(std::string(field) + ": must be in [0, 1]");
  };
  probability("profile.usage_modes.TRACKER_VIA_TOR", c.usage.tracker_via_tor);
  probability("profile.usage_modes.PEERS_VIA_TOR", c.usage.peers_via_tor);
  probability("profile.usage_modes.BOTH", c.usage.both);
  const double sum = c.usage.tracker_via_tor + c.usage.peers_via_tor + c.usage.both;
  if (std::fabs(sum - 1.0) > 1e-9) problems.push_back("profile.usage_modes: must sum to 1");
  probability("profile.announce_includes_ip", c.announce_includes_ip);
  probability("profile.exthandshake_includes_ip", c.exthandshake_includes_ip);
  probability("profile.dht_enabled", c.dht_enabled);

  if (c.duration < 0) problems.push_back("duration: must be >= 0");
  if (c.announce_period <= 0) problems.push_back("announce_period: must be > 0");
  if (c.attacker.linkage_window < 0) problems.push_back("attacker.linkage_window: must be >= 0");
  if (!(c.zipf_s >= 0.0 && c.zipf_s <= 10.0)) problems.push_back("torrents.zipf_s: must be in [0, 10]");
  if (!(c.web_visits_per_hour >= 0.0 && c.web_visits_per_hour <= 3600.0)) {
    problems.push_back("web.visits_per_hour: must be in [0, 3600]");
  }
  if (c.web_visits_per_hour > 0 && c.web_hosts == 0 && c.clients > 0) {
    problems.push_back("web.hosts: must be > 0 when visits_per_hour > 0");
  }
  if (c.clients > 0) {
    if (c.guards == 0) problems.push_back("relays.guards: at least one guard is needed");
    if (c.middles == 0) problems.push_back("relays.middles: at least one middle is needed");
    if (c.exits == 0) problems.push_back("relays.exits: at least one exit is needed");
    if (c.torrents_per_client > 0 && c.catalog_size == 0) {
      problems.push_back("torrents.catalog_size: must be > 0 when clients hold torrents");
    }
  }
  if (c.attacker.instrumented_exits) {
    std::set<std::uint32_t> seen;
    for (auto e : *c.attacker.instrumented_exits) {
      if (e >= c.exits) {
        problems.push_back("attacker.instrumented_exits: " + std::to_string(e) +
                           " is not an exit index (relays.exits = " + std::to_string(c.exits) + ")");
      } else if (!seen.insert(e).second) {
        problems.push_back("attacker.instrumented_exits: " + std::to_string(e) + " listed twice");
      }
    }
  }
  if (c.unique_ports) {
    const std::size_t available =
        c.port_pool.empty() ? 65535 - 1025 + 1
                            : std::set<std::uint16_t>(c.port_pool.begin(), c.port_pool.end()).size();
    if (c.clients > available) {
      problems.push_back("profile.unique_ports: " + std::to_string(c.clients) +
                         " clients but only " + std::to_string(available) + " distinct ports");
    }
  }
  if (c.clients > 0x1FFFF) problems.push_back("clients: the client address range holds 131071");
  if (!problems.empty()) throw InvalidConfig(std::move(problems));
}

std::string to_json(const ScenarioConfig& c, int indent) {
  json modes = json::object();
  modes["TRACKER_VIA_TOR"] = c.usage.tracker_via_tor;
  modes["PEERS_VIA_TOR"] = c.usage.peers_via_tor;
  modes["BOTH"] = c.usage.both;

  json attacker = json::object();
  if (c.attacker.instrumented_exits) {
    attacker["instrumented_exits"] = *c.attacker.instrumented_exits;
  } else {
    attacker["instrumented_exits"] = "all";
  }
  attacker["rewrite_policy"] = attacks::to_string(c.attacker.rewrite_policy);
  attacker["linkage_window"] = seconds_json(c.attacker.linkage_window);
  attacker["payload_enabled"] = c.attacker.payload_enabled;
  attacker["hijack_enabled"] = c.attacker.hijack_enabled;
  attacker["prober_enabled"] = c.attacker.prober_enabled;
  attacker["profile_include_ambiguous"] = c.attacker.profile_include_ambiguous;
  attacker["include_payload_in_headline"] = c.attacker.include_payload_in_headline;

  json root = json::object();
  root["schema"] = kSchemaVersion;
  root["seed"] = c.seed;
  root["duration"] = seconds_json(c.duration);
  root["relays"] = {{"guards", c.guards}, {"middles", c.middles}, {"exits", c.exits}};
  root["clients"] = c.clients;
  root["profile"] = {{"usage_modes", modes},
                     {"announce_includes_ip", c.announce_includes_ip},
                     {"exthandshake_includes_ip", c.exthandshake_includes_ip},
                     {"dht_enabled", c.dht_enabled},
                     {"torrents_per_client", c.torrents_per_client},
                     {"port_pool", c.port_pool},
                     {"unique_ports", c.unique_ports}};
  root["torrents"] = {{"catalog_size", c.catalog_size}, {"zipf_s", c.zipf_s}};
  root["attacker"] = attacker;
  root["announce_period"] = seconds_json(c.announce_period);
  root["web"] = {{"hosts", c.web_hosts}, {"visits_per_hour", c.web_visits_per_hour}};
  root["dht"] = {{"nodes", c.dht_nodes}};
  root["max_peer_connections"] = c.max_peer_connections;
  return root.dump(indent);
}

std::vector<std::uint32_t> instrumented_exit_indices(const ScenarioConfig& c) {
  if (c.attacker.instrumented_exits) return *c.attacker.instrumented_exits;
  std::vector<std::uint32_t> all(c.exits);
  for (std::uint32_t i = 0; i < c.exits; ++i) all[i] = i;
  return all;
}

std::optional<Preset> preset_from_string(std::string_view s) {
  if (s == "tracker-only") return Preset::TrackerOnly;
  if (s == "peers-via-tor") return Preset::PeersViaTor;
  if (s == "mixed") return Preset::Mixed;
  return std::nullopt;
}

ScenarioConfig preset(Preset p, std::uint64_t seed) {
  ScenarioConfig c;
  c.seed = seed;
  switch (p) {
    case Preset::TrackerOnly:
      c.usage = {1.0, 0.0, 0.0};
      c.dht_enabled = 0.0;
      break;
    case Preset::PeersViaTor:
      c.usage = {0.0, 1.0, 0.0};
      c.dht_enabled = 1.0;
      break;
    case Preset::Mixed:
      break;
  }
  return c;
}

}  // namespace exitsim::harness
