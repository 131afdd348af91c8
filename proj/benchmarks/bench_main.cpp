#include <benchmark/benchmark.h>

#include "exitsim/bencode.hpp"
#include "exitsim/btproto.hpp"
#include "exitsim/dht.hpp"
#include "exitsim/scenario.hpp"

using namespace exitsim;

namespace {

bencode::Value sample_response(int peers) {
  btproto::AnnounceResponse r;
  r.interval = 120;
  for (int i = 0; i < peers; ++i) {
    r.peers.push_back({net::Ipv4(static_cast<std::uint32_t>(0x0A000000 + i)), static_cast<std::uint16_t>(6881 + i)});
  }
  return bencode::decode(btproto::build_announce_response(r, btproto::PeerEncoding::Dictionary)).value;
}

dht::NodeId random_id(Rng& rng) {
  std::array<std::uint8_t, 20> raw{};
  for (auto& b : raw) b = static_cast<std::uint8_t>(rng.uniform(0, 255));
  return dht::NodeId(raw);
}

}  // namespace

static void BM_BencodeEncode(benchmark::State& state) {
  const auto v = sample_response(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(bencode::encode(v));
}
BENCHMARK(BM_BencodeEncode)->Arg(8)->Arg(200);

static void BM_BencodeDecode(benchmark::State& state) {
  const Bytes wire = bencode::encode(sample_response(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(bencode::decode(wire));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * wire.size()));
}
BENCHMARK(BM_BencodeDecode)->Arg(8)->Arg(200);

static void BM_CompactPeersDecode(benchmark::State& state) {
  std::vector<btproto::PeerEndpoint> peers;
  for (int i = 0; i < state.range(0); ++i) peers.push_back({net::Ipv4(static_cast<std::uint32_t>(i)), 6881});
  const Bytes blob = btproto::encode_compact_peers(peers);
  for (auto _ : state) benchmark::DoNotOptimize(btproto::decode_compact_peers(blob));
}
BENCHMARK(BM_CompactPeersDecode)->Arg(50)->Arg(1000);

static void BM_FindClosest(benchmark::State& state) {
  Rng rng(1);
  dht::RoutingTable table(random_id(rng));
  for (int i = 0; i < state.range(0); ++i) table.insert({random_id(rng), {net::Ipv4(10, 0, 0, 1), 6881}});
  std::vector<dht::NodeId> targets;
  for (int i = 0; i < 64; ++i) targets.push_back(random_id(rng));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(table.find_closest(targets[i++ % targets.size()], 8));
}
BENCHMARK(BM_FindClosest)->Arg(100)->Arg(1000);

static void BM_ScenarioRun(benchmark::State& state) {
  harness::ScenarioConfig c;
  c.clients = static_cast<std::uint32_t>(state.range(0));
  c.duration = seconds(600);
  for (auto _ : state) benchmark::DoNotOptimize(harness::run_scenario(c, {.audit_privacy = false}));
}
BENCHMARK(BM_ScenarioRun)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
