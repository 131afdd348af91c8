#include <gtest/gtest.h>

#include <set>

#include "exitsim/onion.hpp"

using namespace exitsim;
using namespace exitsim::onion;

namespace {

Directory small_directory(int guards = 3, int middles = 3, int exits = 2) {
  Directory d;
  std::uint64_t next = 1;
  for (int i = 0; i < exits; ++i) d.add(kRelayRange.at(next++), kExit);
  for (int i = 0; i < guards; ++i) d.add(kRelayRange.at(next++), kGuard);
  for (int i = 0; i < middles; ++i) d.add(kRelayRange.at(next++), kMiddle);
  return d;
}

Errc overlay_error(auto&& fn) {
  try {
    fn();
  } catch (const OverlayError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no OverlayError";
  return Errc::UnknownStream;
}

const net::Endpoint kDest{net::Ipv4(100, 64, 0, 1), 80};
const net::Ipv4 kClientIp(198, 18, 0, 1);

std::optional<Bytes> echo(const Delivery& d) { return Bytes("re:") + Bytes(d.payload); }

}  // namespace

TEST(Directory, RolesAndDuplicates) {
  auto d = small_directory();
  EXPECT_EQ(d.with_role(kExit).size(), 2u);
  EXPECT_EQ(d.with_role(kGuard).size(), 3u);
  EXPECT_TRUE(d.is_relay_address(kRelayRange.at(1)));
  EXPECT_EQ(overlay_error([&] { d.add(kRelayRange.at(1), kGuard); }), Errc::DuplicateAddress);
}

TEST(BuildCircuit, ThreeDistinctRelaysInRole) {
  const auto d = small_directory();
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto c = build_circuit(7, d, rng, i + 1, 0);
    EXPECT_TRUE(d.relay(c.guard()).has(kGuard));
    EXPECT_TRUE(d.relay(c.middle()).has(kMiddle));
    EXPECT_TRUE(d.relay(c.exit()).has(kExit));
    EXPECT_EQ(std::set<RelayId>(c.hops.begin(), c.hops.end()).size(), 3u);
  }
}

TEST(BuildCircuit, MultiRoleRelaysStillFillable) {
  // Two all-role relays and one exit-only: the exit must be the exit-only
  // one or the remaining two positions cannot be filled.
  Directory d;
  d.add(kRelayRange.at(1), kExit);
  d.add(kRelayRange.at(2), kGuard | kMiddle | kExit);
  d.add(kRelayRange.at(3), kGuard | kMiddle | kExit);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto c = build_circuit(1, d, rng, i + 1, 0);
    EXPECT_EQ(std::set<RelayId>(c.hops.begin(), c.hops.end()).size(), 3u);
  }
  Directory tiny;
  tiny.add(kRelayRange.at(1), kExit);
  tiny.add(kRelayRange.at(2), kGuard);
  EXPECT_EQ(overlay_error([&] { build_circuit(1, tiny, rng, 1, 0); }), Errc::InsufficientRelays);
}

// Streams at 0 s and 599 s share circuit A; 601 s opens circuit B.
TEST(CircuitWindow, ReuseIsStrictlyInsideWindow) {
  Overlay overlay(small_directory(), 1);
  const auto s0 = overlay.open_stream(1, kDest, AppTag::Web, seconds(0));
  const auto s1 = overlay.open_stream(1, kDest, AppTag::Web, seconds(599));
  const auto s2 = overlay.open_stream(1, kDest, AppTag::Web, seconds(601));
  EXPECT_EQ(s0.circuit, s1.circuit);
  EXPECT_NE(s1.circuit, s2.circuit);
  EXPECT_EQ(overlay.current_circuit(1), s2.circuit);
}

TEST(CircuitWindow, BoundaryAtExactlySixHundredSeconds) {
  Overlay overlay(small_directory(), 1);
  const auto a = overlay.open_stream(1, kDest, AppTag::Web, 0);
  const auto b = overlay.open_stream(1, kDest, AppTag::Web, kCircuitWindow - 1);
  const auto c = overlay.open_stream(1, kDest, AppTag::Web, kCircuitWindow + (kCircuitWindow - 1));
  EXPECT_EQ(a.circuit, b.circuit);
  EXPECT_NE(b.circuit, c.circuit);
  Overlay other(small_directory(), 1);
  const auto x = other.open_stream(1, kDest, AppTag::Web, 0);
  const auto y = other.open_stream(1, kDest, AppTag::Web, kCircuitWindow);
  EXPECT_NE(x.circuit, y.circuit);
}

TEST(CircuitWindow, ClientsNeverShareCircuits) {
  Overlay overlay(small_directory(), 1);
  const auto a = overlay.open_stream(1, kDest, AppTag::Web, 0);
  const auto b = overlay.open_stream(2, kDest, AppTag::Web, 0);
  EXPECT_NE(a.circuit, b.circuit);
  EXPECT_EQ(overlay.circuits().at(a.circuit).owner, 1u);
}

TEST(Sealing, OnlyOuterHopCanPeel) {
  const std::array<HopKey, 3> hops{{{2, 22}, {1, 11}, {0, 7}}};  // exit, middle, guard
  auto env = SealedEnvelope::seal("hello", hops, 99);
  EXPECT_EQ(env.layers(), 3u);
  EXPECT_EQ(env.outer_hop(), 0u);
  EXPECT_EQ(env.serialize().find("hello"), std::string::npos);
  EXPECT_THROW(env.plaintext(), OverlayError);
  EXPECT_EQ(overlay_error([&] { env.remove_layer({1, 11}); }), Errc::TamperedEnvelope);
  EXPECT_EQ(overlay_error([&] { env.remove_layer({0, 8}); }), Errc::TamperedEnvelope);
  env.remove_layer({0, 7});
  env.remove_layer({1, 11});
  env.remove_layer({2, 22});
  EXPECT_EQ(env.plaintext(), "hello");
}

TEST(Sealing, StrippedSealIsDetectedDownstream) {
  const std::array<HopKey, 2> hops{{{1, 11}, {0, 7}}};
  auto env = SealedEnvelope::seal("hello world", hops, 5);
  env.strip_outer_seal_unsafely();
  EXPECT_EQ(overlay_error([&] { env.remove_layer({1, 11}); }), Errc::TamperedEnvelope);
}

TEST(Overlay, ExchangeDeliversFromExitAddress) {
  Overlay overlay(small_directory(), 3);
  const auto s = overlay.open_stream(1, kDest, AppTag::Web, 0);
  std::optional<net::Ipv4> seen_source;
  const auto res = overlay.send_via_circuit(s.id, kClientIp, "ping", 10, [&](const Delivery& d) {
    seen_source = d.source;
    EXPECT_EQ(d.destination, kDest);
    return echo(d);
  });
  EXPECT_TRUE(res.connected);
  EXPECT_EQ(res.reply, "re:ping");
  const auto& c = overlay.circuits().at(s.circuit);
  EXPECT_EQ(seen_source, overlay.directory().relay(c.exit()).address);
  EXPECT_NE(seen_source, kClientIp);
}

TEST(Overlay, RefusedConnection) {
  Overlay overlay(small_directory(), 3);
  const auto s = overlay.open_stream(1, kDest, AppTag::Web, 0);
  const auto res = overlay.send_via_circuit(s.id, kClientIp, "x", 0,
                                            [](const Delivery&) { return std::nullopt; });
  EXPECT_FALSE(res.connected);
}

TEST(Overlay, InstrumentationRecordsBothDirectionsWithoutClientAddress) {
  Overlay overlay(small_directory(3, 3, 1), 4);
  ObservationLog log;
  overlay.instrument_exit(0, log);
  const auto s = overlay.open_stream(1, kDest, AppTag::Web, 0);
  overlay.send_via_circuit(s.id, kClientIp, "GET / HTTP/1.1\r\n\r\n", 5, echo);
  ASSERT_EQ(log.size(), 2u);
  const auto& out = log.entries()[0];
  const auto& in = log.entries()[1];
  EXPECT_EQ(out.direction, Direction::Outbound);
  EXPECT_EQ(in.direction, Direction::Inbound);
  EXPECT_EQ(out.payload, "GET / HTTP/1.1\r\n\r\n");
  EXPECT_EQ(out.circuit, s.circuit);
  EXPECT_EQ(out.stream, s.id);
  const auto& c = overlay.circuits().at(s.circuit);
  EXPECT_EQ(out.previous_hop, overlay.directory().relay(c.middle()).address);
  EXPECT_NE(out.previous_hop, kClientIp);
}

TEST(Overlay, RewriterReplacesReply) {
  Overlay overlay(small_directory(3, 3, 1), 4);
  ObservationLog log;
  overlay.instrument_exit(0, log, [](const ExitObservation& o) -> std::optional<Bytes> {
    return "evil:" + o.payload;
  });
  const auto s = overlay.open_stream(1, kDest, AppTag::Web, 0);
  EXPECT_EQ(overlay.send_via_circuit(s.id, kClientIp, "a", 0, echo).reply, "evil:re:a");
  EXPECT_EQ(log.entries().back().payload, "re:a");
}

TEST(Overlay, RemovedInstrumentationStopsRecording) {
  Overlay overlay(small_directory(3, 3, 1), 4);
  ObservationLog log;
  const auto h = overlay.instrument_exit(0, log);
  overlay.remove_instrumentation(h);
  const auto s = overlay.open_stream(1, kDest, AppTag::Web, 0);
  overlay.send_via_circuit(s.id, kClientIp, "a", 0, echo);
  EXPECT_EQ(log.size(), 0u);
}

TEST(Overlay, Errors) {
  Overlay overlay(small_directory(), 4);
  ObservationLog log;
  const RelayId guard = overlay.directory().with_role(kGuard).front();
  EXPECT_EQ(overlay_error([&] { overlay.instrument_exit(guard, log); }), Errc::NotAnExit);
  EXPECT_EQ(overlay_error([&] { overlay.send_via_circuit(999, kClientIp, "a", 0, echo); }),
            Errc::UnknownStream);
  const auto s = overlay.open_stream(1, kDest, AppTag::Web, 0);
  overlay.tear_down(s.circuit);
  EXPECT_EQ(overlay_error([&] { overlay.send_via_circuit(s.id, kClientIp, "a", 0, echo); }),
            Errc::CircuitTorn);
}

TEST(PrivacyAudit, CleanRunHasNoViolations) {
  Overlay overlay(small_directory(), 8);
  ObservationLog log;
  for (RelayId e : overlay.directory().with_role(kExit)) overlay.instrument_exit(e, log);
  for (ClientId c = 1; c <= 20; ++c) {
    const auto s = overlay.open_stream(c, kDest, AppTag::Tracker, c * 1000);
    overlay.send_via_circuit(s.id, net::Ipv4(198, 18, 0, static_cast<std::uint8_t>(c)),
                             "secret-" + std::to_string(c), c * 1000, echo);
  }
  EXPECT_FALSE(overlay.hop_records().empty());
  EXPECT_TRUE(overlay.audit_privacy().empty());
  for (const auto& r : overlay.hop_records()) {
    // Oracle: the guard alone knows the client; only the exit sees plaintext.
    EXPECT_EQ(r.client_address.has_value(), r.position == 0);
    EXPECT_EQ(r.plaintext, r.position == 2);
  }
}
