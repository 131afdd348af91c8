#include <gtest/gtest.h>

#include <cstring>

#include "exitsim/btproto.hpp"
#include "generators.hpp"

using namespace exitsim;
using namespace exitsim::btproto;

namespace {

InfoHash sample_hash() { return *InfoHash::from_hex("123456789abcdef0112233445566778899aabbcc"); }
PeerId sample_peer() { return *PeerId::from_bytes("-SM0100-abcdefghijkl"); }

Errc proto_error(auto&& fn) {
  try {
    fn();
  } catch (const ProtoError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ProtoError";
  return Errc::BadField;
}

// Oracle for the compact form: written out byte by byte.
std::string manual_compact(std::uint32_t ip, std::uint16_t port) {
  return {static_cast<char>(ip >> 24), static_cast<char>(ip >> 16), static_cast<char>(ip >> 8),
          static_cast<char>(ip), static_cast<char>(port >> 8), static_cast<char>(port)};
}

}  // namespace

TEST(Announce, BuildAndParseWithIp) {
  AnnounceRequest req;
  req.info_hash = sample_hash();
  req.peer_id = sample_peer();
  req.port = 51413;
  req.left = 1048576;
  req.event = AnnounceEvent::Started;
  req.ip = net::Ipv4(203, 0, 113, 7);
  req.numwant = 50;
  const std::string q = build_announce_query(req);
  EXPECT_NE(q.find("ip=203.0.113.7"), std::string::npos);
  EXPECT_NE(q.find("info_hash=%124Vx%9A%BC%DE%F0%11%223DUfw%88%99%AA%BB%CC"), std::string::npos) << q;
  EXPECT_EQ(parse_announce_query(q), req);
}

TEST(Announce, MissingCompactMeansFalseAndExtrasKept) {
  const std::string q =
      "info_hash=" + percent_encode(sample_hash().to_bytes()) +
      "&peer_id=-SM0100-abcdefghijkl&port=6881&uploaded=1&downloaded=2&left=3&key=abc%20d";
  const auto req = parse_announce_query(q);
  EXPECT_FALSE(req.compact);
  EXPECT_FALSE(req.ip);
  ASSERT_EQ(req.extra.size(), 1u);
  EXPECT_EQ(req.extra[0].first, "key");
  EXPECT_EQ(req.extra[0].second, "abc d");
}

TEST(Announce, Errors) {
  const std::string h = "info_hash=" + percent_encode(sample_hash().to_bytes());
  const std::string tail = "&uploaded=0&downloaded=0&left=0";
  EXPECT_EQ(proto_error([&] { parse_announce_query("peer_id=-SM0100-abcdefghijkl&port=1" + tail); }), Errc::MissingField);
  EXPECT_EQ(proto_error([&] { parse_announce_query(h + "&peer_id=-SM0100-abcdefghijkl" + tail); }),
            Errc::MissingField);
  EXPECT_EQ(proto_error([&] { parse_announce_query(h + "&peer_id=short&port=1" + tail); }),
            Errc::BadLength);
  EXPECT_EQ(
      proto_error([&] { parse_announce_query(h + "&peer_id=-SM0100-abcdefghijkl&port=0" + tail); }),
      Errc::BadPort);
  EXPECT_EQ(proto_error([&] {
              parse_announce_query(h + "&peer_id=-SM0100-abcdefghijkl&port=65536" + tail);
            }),
            Errc::BadPort);
  EXPECT_EQ(proto_error([&] {
              parse_announce_query(h + "&peer_id=-SM0100-abcdefghijkl&port=1&ip=1.2.3" + tail);
            }),
            Errc::BadIpLiteral);
}

TEST(PercentCodec, InverseOnRandomBytes) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const std::string raw = gen::bytes(rng, 40);
    const std::string enc = percent_encode(raw);
    for (char c : enc) ASSERT_TRUE(std::isalnum(static_cast<unsigned char>(c)) || std::strchr("-._~%", c));
    ASSERT_EQ(percent_decode(enc), raw);
  }
  EXPECT_EQ(percent_decode("a+b"), "a+b");
  EXPECT_FALSE(percent_decode("%4"));
  EXPECT_FALSE(percent_decode("%zz"));
}

TEST(CompactPeers, ExhaustiveBoundaries) {
  const std::uint32_t ips[] = {0, 1, 0x7FFFFFFF, 0x80000000, 0xFFFFFFFE, 0xFFFFFFFF, 0x0A000001,
                               0xCB007107};
  const std::uint16_t ports[] = {0, 1, 255, 256, 6881, 32767, 32768, 65534, 65535};
  for (auto ip : ips) {
    for (auto port : ports) {
      const PeerEndpoint p{net::Ipv4(ip), port};
      const auto raw = encode_compact_peer(p);
      const std::string expect = manual_compact(ip, port);
      ASSERT_EQ(std::string(raw.begin(), raw.end()), expect);
      ASSERT_EQ(decode_compact_peer(expect), p);
    }
  }
}

TEST(CompactPeers, ListCodecAndLengthCheck) {
  EXPECT_TRUE(decode_compact_peers("").empty());
  const auto peers = decode_compact_peers(from_hex("0A0000011AE1").value());
  ASSERT_EQ(peers.size(), 1u);
  EXPECT_EQ(peers[0].to_string(), "10.0.0.1:6881");
  for (std::size_t n : {1u, 5u, 7u, 11u}) {
    EXPECT_EQ(proto_error([&] { decode_compact_peers(std::string(n, 'x')); }), Errc::BadPeersLength);
  }
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    std::vector<PeerEndpoint> list;
    for (auto n = rng.uniform(0, 10); n > 0; --n) list.push_back(gen::endpoint(rng));
    const Bytes blob = encode_compact_peers(list);
    ASSERT_EQ(blob.size(), list.size() * 6);
    ASSERT_EQ(decode_compact_peers(blob), list);
  }
}

TEST(AnnounceResponse, CompactAndDictionaryRoundTrip) {
  AnnounceResponse resp;
  resp.interval = 120;
  resp.peers = {{net::Ipv4(10, 0, 0, 1), 6881}, {net::Ipv4(203, 0, 113, 9), 51413}};
  resp.complete = 1;
  resp.incomplete = 2;
  for (auto enc : {PeerEncoding::Compact, PeerEncoding::Dictionary}) {
    const Bytes body = build_announce_response(resp, enc);
    EXPECT_EQ(response_is_compact(body), enc == PeerEncoding::Compact);
    EXPECT_EQ(parse_announce_response(body), resp);
  }
  EXPECT_EQ(build_announce_response(resp, PeerEncoding::Compact),
            "d8:completei1e10:incompletei2e8:intervali120e5:peers12:" +
                manual_compact(0x0A000001, 6881) + manual_compact(0xCB007109, 51413) + "e");
}

TEST(AnnounceResponse, Errors) {
  EXPECT_EQ(proto_error([] { parse_announce_response("d5:peers0:e"); }), Errc::MissingField);
  EXPECT_EQ(proto_error([] { parse_announce_response("d8:intervali1e5:peers5:abcdee"); }),
            Errc::BadPeersLength);
  EXPECT_EQ(proto_error([] { parse_announce_response("d14:failure reason4:nopee"); }), Errc::BadField);
  EXPECT_THROW(parse_announce_response("d8:interval"), bencode::DecodeError);
  EXPECT_TRUE(parse_announce_response("d8:intervali60ee").peers.empty());
}

TEST(Handshake, LayoutAndRoundTrip) {
  PeerHandshake hs;
  hs.info_hash = sample_hash();
  hs.peer_id = sample_peer();
  hs.set_extension_supported(true);
  const Bytes wire = build_handshake(hs);
  ASSERT_EQ(wire.size(), 68u);
  EXPECT_EQ(wire[0], 19);
  EXPECT_EQ(wire.substr(1, 19), "BitTorrent protocol");
  EXPECT_EQ(static_cast<unsigned char>(wire[1 + 19 + 5]), 0x10);
  EXPECT_EQ(wire.substr(28, 20), sample_hash().to_bytes());
  EXPECT_EQ(wire.substr(48, 20), sample_peer().to_bytes());
  EXPECT_EQ(parse_handshake(wire), hs);

  Bytes bad = wire;
  bad[5] = 'X';
  EXPECT_EQ(proto_error([&] { parse_handshake(bad); }), Errc::BadProtocolString);
  EXPECT_EQ(proto_error([&] { parse_handshake(wire.substr(0, 67)); }), Errc::BadLength);
}

TEST(ExtendedHandshake, YourIpFixture) {
  ExtendedHandshake ext;
  ext.port = 51413;
  ext.version = "SimTorrent/1.0";
  ext.yourip = net::Ipv4(203, 0, 113, 7);
  const Bytes frame = build_extended_handshake(ext);
  const std::string payload = "d1:pi51413e1:v14:SimTorrent/1.06:yourip4:" +
                              std::string("\xCB\x00\x71\x07", 4) + "e";
  const std::uint32_t len = static_cast<std::uint32_t>(payload.size() + 2);
  const std::string expect = std::string{static_cast<char>(len >> 24), static_cast<char>(len >> 16),
                                         static_cast<char>(len >> 8), static_cast<char>(len), 20, 0} +
                             payload;
  EXPECT_EQ(frame, expect);
  EXPECT_EQ(parse_extended_handshake(frame), ext);
}

TEST(ExtendedHandshake, Errors) {
  EXPECT_EQ(proto_error([] { parse_extended_payload("d6:yourip3:abce"); }), Errc::BadAddressLength);
  // An out-of-range listen port is ignored, not fatal.
  EXPECT_FALSE(parse_extended_payload("d1:pi0ee").port);
  EXPECT_FALSE(parse_extended_payload("d1:pi70000ee").port);
  EXPECT_EQ(proto_error([] { parse_extended_payload("li1ee"); }), Errc::BadFrame);
  EXPECT_EQ(proto_error([] { parse_extended_handshake(std::string("\0\0\0\x05\x14\x00", 6) + "de"); }),
            Errc::BadLength);
  EXPECT_EQ(proto_error([] { parse_extended_handshake(std::string("\0\0\0\x04\x14\x01", 6) + "de"); }),
            Errc::BadFrame);
}

TEST(ExtendedHandshake, RoundTripProperty) {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    ExtendedHandshake ext;
    if (rng.bernoulli(0.8)) ext.port = static_cast<std::uint16_t>(rng.uniform(1, 65535));
    if (rng.bernoulli(0.5)) ext.version = gen::bytes(rng, 12);
    if (rng.bernoulli(0.5)) ext.yourip = gen::ipv4(rng);
    if (rng.bernoulli(0.5)) ext.ipv4 = gen::ipv4(rng);
    if (rng.bernoulli(0.3)) ext.other["m"] = bencode::Dict{{"ut_pex", 1}};
    ASSERT_EQ(parse_extended_handshake(build_extended_handshake(ext)), ext);
  }
}

TEST(PeerWireOpening, HandshakeWithAndWithoutExtension) {
  PeerHandshake hs;
  hs.info_hash = sample_hash();
  hs.peer_id = sample_peer();
  hs.set_extension_supported(true);
  ExtendedHandshake ext;
  ext.port = 6881;
  const auto both = parse_peer_wire_opening(build_handshake(hs) + build_extended_handshake(ext));
  EXPECT_EQ(both.handshake, hs);
  ASSERT_TRUE(both.extended);
  EXPECT_EQ(both.extended->port, 6881);
  EXPECT_FALSE(parse_peer_wire_opening(build_handshake(hs)).extended);
}

TEST(Classify, RecognisesEachFrame) {
  PeerHandshake hs;
  EXPECT_EQ(classify(build_handshake(hs)), FrameKind::PeerWire);
  EXPECT_EQ(classify(build_extended_handshake({})), FrameKind::ExtendedHandshake);
  EXPECT_EQ(classify("info_hash=%12&port=1"), FrameKind::AnnounceQuery);
  EXPECT_EQ(classify("d8:intervali1ee"), FrameKind::AnnounceResponse);
  EXPECT_EQ(classify("li1ee"), FrameKind::Bencoded);
  EXPECT_EQ(classify("GET / HTTP/1.1\r\n\r\n"), FrameKind::Unknown);
  EXPECT_EQ(classify(""), FrameKind::Unknown);
}
