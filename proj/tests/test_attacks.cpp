#include <gtest/gtest.h>

#include <set>
#include <type_traits>

#include "exitsim/attacks.hpp"
#include "exitsim/scenario.hpp"
#include "generators.hpp"

using namespace exitsim;
using namespace exitsim::attacks;
using harness::GroundTruthLedger;
using harness::LedgerRecord;

namespace {

const net::Ipv4 kAlice(198, 18, 0, 1);
const net::Ipv4 kBob(198, 18, 0, 2);
const net::Ipv4 kCarol(198, 18, 0, 3);
const net::Endpoint kTracker = harness::kTrackerEndpoint;

InfoHash hash_of(char c) { return *InfoHash::from_bytes(std::string(20, c)); }
btproto::PeerId peer_of(char c) { return *btproto::PeerId::from_bytes(std::string(20, c)); }

struct ObsBuilder {
  std::vector<ExitObservation> obs;
  std::uint64_t next = 1;

  std::uint64_t add(SimTime t, CircuitId circuit, StreamId stream, net::Endpoint dest, Bytes payload,
                    onion::Direction dir = onion::Direction::Outbound) {
    ExitObservation o;
    o.id = next++;
    o.time = t;
    o.exit = 0;
    o.circuit = circuit;
    o.stream = stream;
    o.previous_hop = onion::kRelayRange.at(9);
    o.destination = dest;
    o.direction = dir;
    o.payload = std::move(payload);
    obs.push_back(std::move(o));
    return obs.back().id;
  }

  std::uint64_t announce(SimTime t, CircuitId c, StreamId s, const InfoHash& h, char peer,
                         std::uint16_t port, std::optional<net::Ipv4> ip = std::nullopt) {
    btproto::AnnounceRequest r;
    r.info_hash = h;
    r.peer_id = peer_of(peer);
    r.port = port;
    r.ip = ip;
    return add(t, c, s, kTracker, btproto::build_announce_query(r));
  }

  void web(SimTime t, CircuitId c, StreamId s, std::uint8_t host) {
    const net::Endpoint h{net::Ipv4(100, 64, 0, host), 80};
    add(t, c, s, h, actors::build_web_request(h, "/"));
  }
};

LedgerRecord record(net::Ipv4 ip, CircuitId circuit, StreamId stream, std::uint8_t exposes = 0) {
  LedgerRecord r;
  r.public_ip = ip;
  r.circuit = circuit;
  r.stream = stream;
  r.exposes = exposes;
  return r;
}

Finding unique(AttackKind a, CircuitId circuit, net::Ipv4 ip) {
  Finding f;
  f.attack = a;
  f.circuit = circuit;
  f.claimed_ip = ip;
  f.candidates = {ip};
  return f;
}

onion::Directory one_relay_directory() {
  onion::Directory d;
  d.add(onion::kRelayRange.at(1), onion::kExit);
  return d;
}

}  // namespace

// Attack entry points take attacker-side inputs only; none accepts the
// ground-truth ledger.
TEST(Capabilities, AttacksCannotSeeGroundTruth) {
  static_assert(!std::is_invocable_v<decltype(&attack_payload_inspection), Observations,
                                     const GroundTruthLedger&, FindingIds&>);
  static_assert(!std::is_invocable_v<decltype(&attack_hijack), Observations, const GroundTruthLedger&,
                                     const RelayAddressBook&, FindingIds&, SimTime>);
  static_assert(!std::is_invocable_v<decltype(&attack_profile_multiplexed), std::span<const Finding>,
                                     const GroundTruthLedger&, ProfileOptions>);
  SUCCEED();
}

TEST(Payload, ReportsSelfReportedAddresses) {
  ObsBuilder b;
  const auto id = b.announce(1000, 7, 70, hash_of('h'), 'a', 51413, kAlice);
  b.announce(1000, 8, 80, hash_of('h'), 'b', 51414);  // no ip=
  btproto::PeerHandshake hs;
  hs.info_hash = hash_of('h');
  btproto::ExtendedHandshake ext;
  ext.yourip = kBob;
  ext.ipv4 = kBob;
  b.add(2000, 9, 90, {kCarol, 6881}, btproto::build_handshake(hs) + btproto::build_extended_handshake(ext));
  b.add(3000, 10, 100, kTracker, "d6:yourip4:" + kCarol.to_bytes() + "e", onion::Direction::Inbound);
  b.add(3000, 10, 100, kTracker, "garbage");                 // not BitTorrent, not inspected
  b.add(3000, 10, 101, kTracker, "info_hash=%12&port=0");    // looks like an announce, fails

  FindingIds ids;
  PayloadDiagnostics diag;
  const auto found = attack_payload_inspection(b.obs, ids, &diag);
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].claimed_ip, kAlice);
  EXPECT_EQ(found[0].circuit, 7u);
  EXPECT_EQ(found[0].confidence, Confidence::UnverifiedSelfReport);
  EXPECT_EQ(found[0].evidence.observations, std::vector<std::uint64_t>{id});
  EXPECT_EQ(found[1].claimed_ip, kBob);  // yourip and ipv4 agree: one finding
  EXPECT_EQ(found[1].attack, AttackKind::Payload);
  EXPECT_EQ(diag.unparsed, 1u);
}

TEST(Rewriter, ReplaceAllAndPrependKeepEncoding) {
  const PeerEndpoint attacker{net::Ipv4(203, 0, 113, 66), 6889};
  const PeerEndpoint honest{net::Ipv4(100, 65, 0, 1), 6881};
  btproto::AnnounceResponse resp;
  resp.interval = 120;
  resp.peers = {honest};
  ExitObservation in;
  in.direction = onion::Direction::Inbound;
  for (auto enc : {btproto::PeerEncoding::Compact, btproto::PeerEncoding::Dictionary}) {
    in.payload = btproto::build_announce_response(resp, enc);
    const auto replaced = make_peer_list_rewriter(attacker, RewritePolicy::ReplaceAll)(in);
    ASSERT_TRUE(replaced);
    EXPECT_EQ(btproto::parse_announce_response(*replaced).peers, std::vector<PeerEndpoint>{attacker});
    EXPECT_EQ(btproto::response_is_compact(*replaced), enc == btproto::PeerEncoding::Compact);
    const auto prepended = make_peer_list_rewriter(attacker, RewritePolicy::Prepend)(in);
    ASSERT_TRUE(prepended);
    EXPECT_EQ(btproto::parse_announce_response(*prepended).peers,
              (std::vector<PeerEndpoint>{attacker, honest}));
  }
  in.payload = "HTTP/1.1 200 OK\r\n\r\n";
  EXPECT_FALSE(make_peer_list_rewriter(attacker, RewritePolicy::ReplaceAll)(in));
}

TEST(Hijack, JoinsDirectConnectionWithLatestAnnounceInWindow) {
  ObsBuilder b;
  b.announce(seconds(10), 5, 50, hash_of('h'), 'a', 51413);
  const auto latest = b.announce(seconds(100), 6, 60, hash_of('h'), 'a', 51413);
  b.announce(seconds(100), 7, 70, hash_of('g'), 'b', 51413);
  const auto dir = one_relay_directory();
  const RelayAddressBook relays(dir);
  const std::vector<actors::AttackerPeerEntry> log{
      {1, seconds(110), kAlice, hash_of('h'), peer_of('a')},
      {2, seconds(111), onion::kRelayRange.at(1), hash_of('g'), peer_of('b')},  // came via overlay
      {3, seconds(200), kBob, hash_of('g'), peer_of('b')},                      // outside 60 s
      {4, seconds(99), kCarol, hash_of('g'), peer_of('b')},                     // before announce
  };
  FindingIds ids;
  const auto found = attack_hijack(b.obs, log, relays, ids, seconds(60));
  ASSERT_EQ(found.size(), 1u);
  EXPECT_EQ(found[0].circuit, 6u);
  EXPECT_EQ(found[0].claimed_ip, kAlice);
  EXPECT_EQ(found[0].confidence, Confidence::VerifiedTransport);
  EXPECT_EQ(found[0].evidence.observations, std::vector<std::uint64_t>{latest});
  EXPECT_EQ(found[0].evidence.peer_log_entries, std::vector<std::uint64_t>{1});
  EXPECT_EQ(found[0].evidence.info_hash, hash_of('h'));
}

TEST(Hijack, WindowBoundaryIsInclusive) {
  ObsBuilder b;
  b.announce(seconds(0), 5, 50, hash_of('h'), 'a', 1);
  const auto dir = one_relay_directory();
  FindingIds ids;
  const std::vector<actors::AttackerPeerEntry> at{{1, seconds(60), kAlice, hash_of('h'), peer_of('a')}};
  EXPECT_EQ(attack_hijack(b.obs, at, RelayAddressBook(dir), ids, seconds(60)).size(), 1u);
  const std::vector<actors::AttackerPeerEntry> past{
      {1, seconds(60) + 1, kAlice, hash_of('h'), peer_of('a')}};
  EXPECT_TRUE(attack_hijack(b.obs, past, RelayAddressBook(dir), ids, seconds(60)).empty());
}

TEST(Dht, ObservedPairsFromAnnouncesAndExtendedHandshakes) {
  ObsBuilder b;
  b.announce(1, 5, 50, hash_of('h'), 'a', 51413);
  b.announce(2, 5, 51, hash_of('h'), 'a', 51413);
  btproto::PeerHandshake hs;
  hs.info_hash = hash_of('g');
  btproto::ExtendedHandshake ext;
  ext.port = 4000;
  b.add(3, 6, 60, {kCarol, 1}, btproto::build_handshake(hs) + btproto::build_extended_handshake(ext));
  const auto pairs = extract_observed_pairs(b.obs);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].circuit, 5u);
  EXPECT_EQ(pairs[0].port, 51413);
  EXPECT_EQ(pairs[0].streams, (std::vector<StreamId>{50, 51}));
  EXPECT_EQ(pairs[1].info_hash, hash_of('g'));
  EXPECT_EQ(pairs[1].port, 4000);
}

TEST(Dht, UniqueMatchIsVerifiedSharedPortIsAmbiguous) {
  Rng rng(3);
  auto net = dht::DhtNetwork::build(32, harness::kDhtRange, harness::kDhtPort, rng);
  net.announce({kAlice, 6881}, hash_of('h'), 51413, 0);
  net.announce({kBob, 6881}, hash_of('h'), 40000, 0);
  net.announce({kAlice, 6881}, hash_of('g'), 7000, 0);
  net.announce({kCarol, 6881}, hash_of('g'), 7000, 0);

  ObsBuilder b;
  b.announce(1, 5, 50, hash_of('h'), 'a', 51413);
  b.announce(1, 6, 60, hash_of('g'), 'c', 7000);
  b.announce(1, 7, 70, hash_of('h'), 'x', 1234);
  dht::DhtNetwork empty;
  DhtProber prober(net, harness::kProberEndpoint);
  FindingIds ids;
  DhtDiagnostics diag;
  const auto found = attack_dht(b.obs, prober, 10, ids, &diag);
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].claimed_ip, kAlice);
  EXPECT_EQ(found[0].confidence, Confidence::VerifiedTransport);
  EXPECT_EQ(found[0].evidence.port, 51413);
  EXPECT_FALSE(found[1].claimed_ip);
  EXPECT_EQ(found[1].confidence, Confidence::Ambiguous);
  EXPECT_EQ(found[1].candidates, (std::vector<net::Ipv4>{kAlice, kCarol}));
  EXPECT_EQ(diag.pairs, 3u);
  EXPECT_EQ(diag.no_match, 1u);
  EXPECT_EQ(prober.lookups(), 2u);  // one per distinct info-hash

  DhtProber dead(empty, harness::kProberEndpoint);
  DhtDiagnostics d2;
  EXPECT_TRUE(attack_dht(b.obs, dead, 10, ids, &d2).empty());
  EXPECT_EQ(d2.skipped_lookups, 3u);  // counted per observed pair
}

TEST(Profile, AttributesOnlyWebStreamsOnVerifiedCircuits) {
  ObsBuilder b;
  b.web(10, 5, 51, 1);
  b.web(20, 5, 52, 2);
  b.web(30, 6, 61, 3);  // no finding on circuit 6
  b.web(40, 7, 71, 4);  // conflicting claims on circuit 7
  b.web(50, 8, 81, 5);  // only an unverified claim on circuit 8
  b.add(60, 5, 53, kTracker, "info_hash=x");  // not a web request
  std::vector<Finding> findings{unique(AttackKind::Hijack, 5, kAlice),
                                unique(AttackKind::Dht, 5, kAlice),
                                unique(AttackKind::Hijack, 7, kBob),
                                unique(AttackKind::Dht, 7, kCarol),
                                unique(AttackKind::Payload, 8, kCarol)};
  findings[4].confidence = Confidence::UnverifiedSelfReport;
  for (std::size_t i = 0; i < findings.size(); ++i) findings[i].id = i + 1;
  const auto profiles = attack_profile_multiplexed(findings, b.obs);
  ASSERT_EQ(profiles.size(), 1u);
  EXPECT_EQ(profiles[0].claimed_ip, kAlice);
  ASSERT_EQ(profiles[0].visits.size(), 2u);
  EXPECT_EQ(profiles[0].visits[0].stream, 51u);
  EXPECT_EQ(profiles[0].visits[1].host.ip, net::Ipv4(100, 64, 0, 2));
  EXPECT_EQ(profiles[0].source_findings, (std::vector<std::uint64_t>{1, 2}));
}

TEST(WebDetection, RequestLinesOnly) {
  EXPECT_TRUE(is_web_request("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
  EXPECT_TRUE(is_web_request("POST /f HTTP/1.0\r\n\r\n"));
  EXPECT_FALSE(is_web_request("GET / FTP\r\n"));
  EXPECT_FALSE(is_web_request("info_hash=%12"));
  EXPECT_FALSE(is_web_request(""));
}

// Three of four unique claims are right: precision 0.75.
TEST(Scoring, PrecisionArithmetic) {
  GroundTruthLedger ledger;
  ledger.append(record(kAlice, 1, 10, harness::kExposesHijack));
  ledger.append(record(kBob, 2, 20, harness::kExposesHijack));
  ledger.append(record(kCarol, 3, 30, harness::kExposesHijack));
  ledger.append(record(kCarol, 4, 40));
  const std::vector<Finding> f{unique(AttackKind::Hijack, 1, kAlice), unique(AttackKind::Hijack, 2, kBob),
                               unique(AttackKind::Hijack, 3, kCarol), unique(AttackKind::Hijack, 4, kAlice)};
  const auto s = score_findings(f, {}, ledger);
  const auto& row = s.row(AttackKind::Hijack);
  EXPECT_EQ(row.findings, 4u);
  EXPECT_EQ(row.unique_claims, 4u);
  EXPECT_EQ(row.correct_unique, 3u);
  EXPECT_DOUBLE_EQ(*row.precision, 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(*row.recall, 1.0);
  EXPECT_FALSE(row.ambiguous_rate);
  EXPECT_EQ(s.headline_deanonymized_ips, 3u);
}

TEST(Scoring, UndefinedRatiosAreNotApplicable) {
  GroundTruthLedger ledger;
  ledger.append(record(kAlice, 1, 10));
  const auto s = score_findings({}, {}, ledger);
  for (const auto& row : s.rows) {
    EXPECT_FALSE(row.precision);
    EXPECT_FALSE(row.ambiguous_rate);
    if (row.attack != AttackKind::Profile) EXPECT_FALSE(row.recall);
  }
  EXPECT_FALSE(s.profile_accuracy);
}

TEST(Scoring, RecallCountsOnlyExposedClients) {
  GroundTruthLedger ledger;
  ledger.append(record(kAlice, 1, 10, harness::kExposesDht));
  ledger.append(record(kBob, 2, 20, harness::kExposesDht));
  ledger.append(record(kCarol, 3, 30));
  const std::vector<Finding> f{unique(AttackKind::Dht, 1, kAlice), unique(AttackKind::Dht, 3, kCarol)};
  const auto& row = score_findings(f, {}, ledger).row(AttackKind::Dht);
  EXPECT_DOUBLE_EQ(*row.precision, 1.0);
  EXPECT_EQ(row.vulnerable_clients, 2u);
  EXPECT_DOUBLE_EQ(*row.recall, 0.5);
}

TEST(Scoring, AmbiguousRate) {
  GroundTruthLedger ledger;
  ledger.append(record(kAlice, 1, 10));
  ledger.append(record(kBob, 2, 20));
  Finding a;
  a.attack = AttackKind::Dht;
  a.circuit = 1;
  a.confidence = Confidence::Ambiguous;
  a.candidates = {kAlice, kBob};
  Finding b = a;
  b.circuit = 2;
  b.candidates = {kAlice, kCarol};
  const std::vector<Finding> f{a, b};
  const auto& row = score_findings(f, {}, ledger).row(AttackKind::Dht);
  EXPECT_EQ(row.ambiguous, 2u);
  EXPECT_EQ(row.unique_claims, 0u);
  EXPECT_DOUBLE_EQ(*row.ambiguous_rate, 0.5);
  EXPECT_FALSE(row.precision);
}

TEST(Scoring, PayloadLeftOutOfHeadlineByDefault) {
  GroundTruthLedger ledger;
  ledger.append(record(kAlice, 1, 10, harness::kExposesPayload));
  const std::vector<Finding> f{unique(AttackKind::Payload, 1, kAlice)};
  EXPECT_EQ(score_findings(f, {}, ledger).headline_deanonymized_ips, 0u);
  EXPECT_FALSE(score_findings(f, {}, ledger).row(AttackKind::Payload).headline);
  EXPECT_EQ(score_findings(f, {}, ledger, {.include_payload_in_headline = true}).headline_deanonymized_ips,
            1u);
}

TEST(Scoring, UnknownCircuitIsLedgerMismatch) {
  GroundTruthLedger ledger;
  ledger.append(record(kAlice, 1, 10));
  const std::vector<Finding> f{unique(AttackKind::Hijack, 99, kAlice)};
  try {
    score_findings(f, {}, ledger);
    FAIL();
  } catch (const ScoreError& e) {
    EXPECT_NE(std::string(e.what()).find("LedgerMismatch"), std::string::npos);
  }
  BrowsingProfile p;
  p.claimed_ip = kAlice;
  p.visits.push_back({0, {}, 1, 999, 0});
  const std::vector<BrowsingProfile> ps{p};
  EXPECT_THROW(score_findings({}, ps, ledger), ScoreError);
}

TEST(Scoring, ProfileAccuracy) {
  GroundTruthLedger ledger;
  ledger.append(record(kAlice, 1, 10));
  ledger.append(record(kAlice, 1, 11));
  ledger.append(record(kBob, 2, 20));
  BrowsingProfile p;
  p.claimed_ip = kAlice;
  p.visits = {{0, {}, 1, 10, 0}, {0, {}, 1, 11, 0}, {0, {}, 2, 20, 0}};
  const std::vector<BrowsingProfile> ps{p};
  const auto s = score_findings({}, ps, ledger);
  EXPECT_EQ(s.attributed_web_streams, 3u);
  EXPECT_EQ(s.correct_web_streams, 2u);
  EXPECT_DOUBLE_EQ(*s.profile_accuracy, 2.0 / 3.0);
  EXPECT_FALSE(s.row(AttackKind::Profile).headline);
}

// End to end: BOTH clients send peer traffic through the overlay, so the
// injected attacker peer only ever sees relay addresses.
TEST(EndToEnd, BothModeYieldsNoHijackFindings) {
  harness::ScenarioConfig cfg;
  cfg.seed = 5;
  cfg.clients = 60;
  cfg.usage = {0, 0, 1};
  const auto run = harness::run_scenario(cfg);
  EXPECT_FALSE(run.attacker_log.empty());
  for (const auto& e : run.attacker_log) EXPECT_TRUE(onion::kRelayRange.contains(e.source));
  EXPECT_EQ(run.scores.row(AttackKind::Hijack).findings, 0u);
}

TEST(EndToEnd, TrackerOnlyHijackIsExact) {
  harness::ScenarioConfig cfg;
  cfg.seed = 6;
  cfg.clients = 60;
  cfg.usage = {1, 0, 0};
  cfg.dht_enabled = 0;
  const auto run = harness::run_scenario(cfg);
  const auto& row = run.scores.row(AttackKind::Hijack);
  EXPECT_GT(row.findings, 0u);
  EXPECT_DOUBLE_EQ(row.precision.value_or(-1), 1.0);
  EXPECT_DOUBLE_EQ(row.recall.value_or(-1), 1.0);
  EXPECT_EQ(run.scores.row(AttackKind::Dht).findings, 0u);
}
