// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "exitsim/inspect.hpp"
#include "exitsim/report.hpp"
#include "exitsim/scenario.hpp"
#include "generators.hpp"

using namespace exitsim;
using namespace exitsim::harness;
using attacks::AttackKind;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt_ratio(const std::optional<double>& v) {
  if (!v) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

ScenarioConfig base(std::uint64_t seed, std::uint32_t clients) {
  ScenarioConfig c;
  c.seed = seed;
  c.clients = clients;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared by criteria 1 and 6.
const RunResult& large_run() {
  static const RunResult run = [] {
    auto c = base(2024, 1000);
    c.duration = seconds(3600);
    return run_scenario(c, {.audit_privacy = true});
  }();
  return run;
}

Outcome scale() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& run = large_run();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.pass = s < 60.0 && run.privacy_violations.empty() && run.diagnostics.hop_records > 0;
  o.detail = "1000 clients, 3600 s, audit on: " + std::to_string(s) + " s, " +
             std::to_string(run.privacy_violations.size()) + " privacy violations";
  return o;
}

Outcome hijack_tracker_only() {
  auto c = base(42, 100);
  c.usage = {1, 0, 0};
  const auto run = run_scenario(c);
  const auto& row = run.scores.row(AttackKind::Hijack);
  Outcome o;
  o.pass = row.findings > 0 && row.precision == 1.0 && row.recall == 1.0;
  o.detail = "HIJACK precision " + fmt_ratio(row.precision) + ", recall " + fmt_ratio(row.recall) +
             ", " + std::to_string(row.findings) + " findings";
  return o;
}

Outcome hijack_both_mode() {
  auto c = base(43, 100);
  c.usage = {0, 0, 1};
  const auto run = run_scenario(c);
  const auto& row = run.scores.row(AttackKind::Hijack);
  Outcome o;
  o.pass = row.findings == 0 && !run.attacker_log.empty();
  o.detail = std::to_string(row.findings) + " HIJACK findings, " +
             std::to_string(run.attacker_log.size()) + " overlay connections at attacker peer";
  return o;
}

// Brute-force DHT join: every attacker-visible (circuit, info_hash, port) pair
// against every stored peer entry in the network.
std::pair<std::set<std::pair<onion::CircuitId, net::Ipv4>>, std::size_t> brute_dht_join(
    const RunResult& run) {
  std::set<std::tuple<onion::CircuitId, btproto::InfoHash, std::uint16_t>> pairs;
  for (const auto& o : run.observations) {
    if (o.direction != onion::Direction::Outbound) continue;
    try {
      switch (btproto::classify(o.payload)) {
        case btproto::FrameKind::AnnounceQuery: {
          const auto r = btproto::parse_announce_query(o.payload);
          pairs.insert({o.circuit, r.info_hash, r.port});
          break;
        }
        case btproto::FrameKind::PeerWire: {
          const auto w = btproto::parse_peer_wire_opening(o.payload);
          if (w.extended && w.extended->port) {
            pairs.insert({o.circuit, w.handshake.info_hash, *w.extended->port});
          }
          break;
        }
        default: break;
      }
    } catch (const std::exception&) {
    }
  }
  std::set<std::pair<onion::CircuitId, net::Ipv4>> unique;
  std::size_t ambiguous = 0;
  for (const auto& [circuit, h, port] : pairs) {
    std::set<net::Ipv4> ips;
    for (const auto& e : run.dht_store) {
      if (e.info_hash == h && e.endpoint.port == port) ips.insert(e.endpoint.ip);
    }
    if (ips.size() == 1) unique.insert({circuit, *ips.begin()});
    if (ips.size() > 1) ++ambiguous;
  }
  return {unique, ambiguous};
}

Outcome dht_exact() {
  auto c = base(44, 200);
  c.usage = {0, 1, 0};
  c.dht_enabled = 1.0;
  c.unique_ports = true;
  const auto run = run_scenario(c);
  const auto& row = run.scores.row(AttackKind::Dht);
  std::set<std::pair<onion::CircuitId, net::Ipv4>> claimed;
  std::size_t ambiguous = 0;
  for (const auto& f : run.findings) {
    if (f.attack != AttackKind::Dht) continue;
    if (f.claimed_ip) claimed.insert({f.circuit, *f.claimed_ip});
    else ++ambiguous;
  }
  const auto [expect, expect_ambiguous] = brute_dht_join(run);
  Outcome o;
  o.pass = row.precision == 1.0 && row.recall.value_or(0) >= 0.95 && claimed == expect &&
           ambiguous == expect_ambiguous && !expect.empty();
  o.detail = "DHT precision " + fmt_ratio(row.precision) + ", recall " + fmt_ratio(row.recall) +
             ", " + std::to_string(claimed.size()) + " claims vs " + std::to_string(expect.size()) +
             " from brute-force join";
  return o;
}

Outcome dht_shared_port() {
  auto c = base(45, 2);
  c.usage = {0, 1, 0};
  c.dht_enabled = 1.0;
  c.port_pool = {51413};
  c.catalog_size = 1;
  c.torrents_per_client = 1;
  c.exthandshake_includes_ip = 0;
  c.announce_includes_ip = 0;
  const auto run = run_scenario(c);
  std::map<onion::CircuitId, net::Ipv4> owner;
  for (const auto& r : run.ledger.records()) {
    if (r.circuit) owner[r.circuit] = r.public_ip;
  }
  std::size_t ambiguous = 0, contains = 0, wrong_unique = 0;
  for (const auto& f : run.findings) {
    if (f.attack != AttackKind::Dht) continue;
    const auto truth = owner.at(f.circuit);
    if (f.confidence == attacks::Confidence::Ambiguous) {
      ++ambiguous;
      if (std::find(f.candidates.begin(), f.candidates.end(), truth) != f.candidates.end()) ++contains;
    } else if (f.claimed_ip != truth) {
      ++wrong_unique;
    }
  }
  Outcome o;
  o.pass = ambiguous > 0 && contains == ambiguous && wrong_unique == 0;
  o.detail = std::to_string(ambiguous) + " AMBIGUOUS findings, " + std::to_string(contains) +
             " contain the true address, " + std::to_string(wrong_unique) + " wrong unique claims";
  return o;
}

// Attribution accuracy, plus how many visits landed on circuits with no
// verified finding.
struct ProfileCheck {
  std::size_t visits = 0, correct = 0, stray = 0, on_correct_circuits = 0, correct_on_correct = 0;
};

ProfileCheck check_profiles(const RunResult& run) {
  std::map<onion::CircuitId, net::Ipv4> owner;
  std::map<onion::StreamId, net::Ipv4> stream_owner;
  for (const auto& r : run.ledger.records()) {
    if (r.circuit) {
      owner[r.circuit] = r.public_ip;
      stream_owner[r.stream] = r.public_ip;
    }
  }
  std::set<onion::CircuitId> verified, correctly_verified;
  for (const auto& f : run.findings) {
    if (f.confidence != attacks::Confidence::VerifiedTransport) continue;
    if (f.attack != AttackKind::Hijack && f.attack != AttackKind::Dht) continue;
    verified.insert(f.circuit);
    if (f.claimed_ip == owner.at(f.circuit)) correctly_verified.insert(f.circuit);
  }
  ProfileCheck pc;
  for (const auto& p : run.profiles) {
    for (const auto& v : p.visits) {
      ++pc.visits;
      const bool right = stream_owner.at(v.stream) == p.claimed_ip;
      pc.correct += right;
      if (!verified.count(v.circuit)) ++pc.stray;
      if (correctly_verified.count(v.circuit)) {
        ++pc.on_correct_circuits;
        pc.correct_on_correct += right;
      }
    }
  }
  return pc;
}

Outcome profiling() {
  // Mixed usage with web schedules and forced unique ports, so attack 3's
  // claims cannot collide.
  auto c = base(46, 300);
  c.duration = seconds(3600);
  c.unique_ports = true;
  c.web_visits_per_hour = 12;
  const auto run = run_scenario(c);
  const auto pc = check_profiles(run);

  // Large run with random ports: a client outside the DHT can share a torrent
  // and port with one inside it, so a few attack-3 claims are wrong. The
  // profiler must still be exact on every correctly de-anonymized circuit.
  const auto big = check_profiles(large_run());

  Outcome o;
  o.pass = pc.visits > 0 && pc.correct == pc.visits && pc.stray == 0 &&
           run.scores.profile_accuracy == 1.0 && big.stray == 0 &&
           big.correct_on_correct == big.on_correct_circuits;
  o.detail = "unique ports: accuracy " + fmt_ratio(run.scores.profile_accuracy) + " over " +
             std::to_string(pc.visits) + " streams; random ports: " +
             std::to_string(big.correct_on_correct) + "/" + std::to_string(big.on_correct_circuits) +
             " on correctly de-anonymized circuits, raw " +
             fmt_ratio(large_run().scores.profile_accuracy) + "; " +
             std::to_string(pc.stray + big.stray) + " visits on circuits without a verified finding";
  return o;
}

Outcome codecs() {
  Rng rng(7);
  std::size_t roundtrips = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto v = gen::value(rng);
    if (bencode::decode(bencode::encode(v)).value != v) return {false, "bencode round trip failed"};
    ++roundtrips;
  }
  const std::uint32_t ips[] = {0, 1, 0x7FFFFFFF, 0x80000000, 0xFFFFFFFF};
  const std::uint16_t ports[] = {0, 1, 255, 256, 65534, 65535};
  std::size_t compact = 0;
  for (auto ip : ips) {
    for (auto port : ports) {
      const btproto::PeerEndpoint p{net::Ipv4(ip), port};
      const auto raw = btproto::encode_compact_peer(p);
      const std::string want{static_cast<char>(ip >> 24), static_cast<char>(ip >> 16),
                             static_cast<char>(ip >> 8), static_cast<char>(ip),
                             static_cast<char>(port >> 8), static_cast<char>(port)};
      if (std::string(raw.begin(), raw.end()) != want || btproto::decode_compact_peer(want) != p) {
        return {false, "compact peer mismatch at " + p.to_string()};
      }
      ++compact;
    }
  }
  std::size_t fixtures = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(EXITSIM_FIXTURE_DIR)) {
    if (e.path().extension() != ".hex") continue;
    const auto fx = load_fixture(e.path().string());
    const auto got = inspect_frame(fx.bytes, fx.format);
    const bool bad = e.path().filename().string().rfind("bad_", 0) == 0;
    if ((got.kind == "error") != bad) return {false, "fixture " + e.path().filename().string()};
    for (const auto& [k, v] : fx.expect) {
      const auto* actual = got.find(k);
      if (!actual || *actual != v) return {false, "fixture " + e.path().filename().string() + " " + k};
    }
    ++fixtures;
  }
  return {fixtures > 0, std::to_string(roundtrips) + " bencode round trips, " + std::to_string(compact) +
                            " compact boundaries, " + std::to_string(fixtures) + " fixtures"};
}

Outcome kademlia() {
  Rng rng(99);
  for (int instance = 0; instance < 500; ++instance) {
    const auto self = gen::fixed<dht::NodeId>(rng);
    dht::RoutingTable table(self);
    for (auto n = rng.uniform(0, 600); n > 0; --n) table.insert({gen::fixed<dht::NodeId>(rng), gen::endpoint(rng)});
    const auto target = gen::fixed<dht::NodeId>(rng);
    const std::size_t k = rng.uniform(1, 16);
    auto all = table.contacts();
    std::sort(all.begin(), all.end(), [&](const dht::Contact& a, const dht::Contact& b) {
      for (std::size_t i = 0; i < dht::NodeId::size; ++i) {
        const int da = a.id[i] ^ target[i], db = b.id[i] ^ target[i];
        if (da != db) return da < db;
      }
      return false;
    });
    if (all.size() > k) all.resize(k);
    if (table.find_closest(target, k) != all) return {false, "instance " + std::to_string(instance)};
  }
  return {true, "500 random tables agree with brute-force XOR sort"};
}

Outcome determinism() {
  const auto cfg = load_config(std::string(EXITSIM_SCENARIO_DIR) + "/smoke.json");
  const auto root = std::filesystem::temp_directory_path() / "exitsim_acceptance";
  std::filesystem::remove_all(root);
  write_outputs(run_scenario(cfg), (root / "a").string());
  write_outputs(run_scenario(cfg), (root / "b").string());
  std::string differs;
  for (const char* f : {kReportJsonFile, kFindingsFile, kObservationsFile}) {
    if (slurp(root / "a" / f) != slurp(root / "b" / f)) differs += std::string(" ") + f;
  }
  std::filesystem::remove_all(root);
  return {differs.empty(), differs.empty() ? "report.json, findings.jsonl, observations.jsonl identical"
                                           : "differs:" + differs};
}

Outcome window_rule() {
  onion::Directory d;
  d.add(onion::kRelayRange.at(1), onion::kExit);
  d.add(onion::kRelayRange.at(2), onion::kGuard);
  d.add(onion::kRelayRange.at(3), onion::kMiddle);
  onion::Overlay overlay(std::move(d), 1);
  const net::Endpoint dst{net::Ipv4(100, 64, 0, 1), 80};
  const auto a = overlay.open_stream(1, dst, onion::AppTag::Web, seconds(0)).circuit;
  const auto b = overlay.open_stream(1, dst, onion::AppTag::Web, seconds(599)).circuit;
  const auto c = overlay.open_stream(1, dst, onion::AppTag::Web, seconds(601)).circuit;
  return {a == b && b != c, "streams at 0/599/601 s on circuits " + std::to_string(a) + "/" +
                                std::to_string(b) + "/" + std::to_string(c)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"scale and privacy audit", scale},
      {"hijack exact for tracker-only clients", hijack_tracker_only},
      {"hijack silent for BOTH clients", hijack_both_mode},
      {"DHT port match exact", dht_exact},
      {"DHT shared port is ambiguous", dht_shared_port},
      {"multiplexed profiling", profiling},
      {"codec suites", codecs},
      {"kademlia oracle", kademlia},
      {"determinism", determinism},
      {"circuit window", window_rule},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %d: %s - %s (%s)\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
