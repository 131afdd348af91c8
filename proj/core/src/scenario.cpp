#include "exitsim/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "exitsim/engine.hpp"
#include "exitsim/rng.hpp"

namespace exitsim::harness {

namespace {

enum Stream : std::uint64_t {
  kCatalogStream = 1,
  kClientStream,
  kWebStream,
  kDhtStream,
  kOverlayStream,
  kAttackerStream,
};

template <std::size_t N, typename Tag>
FixedBytes<N, Tag> random_bytes(Rng& rng) {
  std::array<std::uint8_t, N> raw{};
  for (auto& b : raw) b = static_cast<std::uint8_t>(rng.next() >> 56);
  return FixedBytes<N, Tag>(raw);
}

btproto::PeerId make_peer_id(std::string_view prefix, std::uint64_t index, Rng& rng) {
  static constexpr char kAlphabet[] = "0123456789abcdefghijklmnopqrstuvwxyz";
  std::string id(prefix);
  // The index part keeps ids unique; the random tail mimics real clients.
  for (int i = 5; i >= 0; --i) {
    std::uint64_t v = index;
    for (int j = 0; j < i; ++j) v /= 36;
    id += kAlphabet[v % 36];
  }
  while (id.size() < 20) id += kAlphabet[rng.uniform(0, 35)];
  return *btproto::PeerId::from_bytes(id);
}

std::vector<std::uint16_t> draw_ports(const ScenarioConfig& c, Rng& rng) {
  std::vector<std::uint16_t> ports;
  ports.reserve(c.clients);
  if (!c.unique_ports) {
    for (std::uint32_t i = 0; i < c.clients; ++i) {
      ports.push_back(c.port_pool.empty()
                          ? static_cast<std::uint16_t>(rng.uniform(actors::kMinListenPort,
                                                                   actors::kMaxListenPort))
                          : c.port_pool[rng.index(c.port_pool.size())]);
    }
    return ports;
  }
  std::vector<std::uint16_t> pool;
  if (c.port_pool.empty()) {
    std::set<std::uint16_t> taken;
    while (ports.size() < c.clients) {
      const auto p =
          static_cast<std::uint16_t>(rng.uniform(actors::kMinListenPort, actors::kMaxListenPort));
      if (taken.insert(p).second) ports.push_back(p);
    }
    return ports;
  }
  const std::set<std::uint16_t> distinct(c.port_pool.begin(), c.port_pool.end());
  pool.assign(distinct.begin(), distinct.end());
  for (std::size_t i = 0; i < c.clients; ++i) {
    const std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
    ports.push_back(pool[i]);
  }
  return ports;
}

}  // namespace

Population generate_population(const ScenarioConfig& c) {
  validate(c);
  Population pop;
  Rng root(c.seed);
  Rng catalog_rng = root.fork(kCatalogStream);
  Rng client_rng = root.fork(kClientStream);
  Rng web_rng = root.fork(kWebStream);

  // Relays: exits first so exit index i is relay id i.
  std::uint32_t next_addr = 1;
  for (std::uint32_t i = 0; i < c.exits; ++i) {
    pop.exits.push_back(pop.directory.add(onion::kRelayRange.at(next_addr++), onion::kExit).id);
  }
  for (std::uint32_t i = 0; i < c.guards; ++i) {
    pop.directory.add(onion::kRelayRange.at(next_addr++), onion::kGuard);
  }
  for (std::uint32_t i = 0; i < c.middles; ++i) {
    pop.directory.add(onion::kRelayRange.at(next_addr++), onion::kMiddle);
  }

  for (std::uint32_t i = 0; i < c.catalog_size; ++i) {
    pop.catalog.push_back(random_bytes<20, btproto::InfoHashTag>(catalog_rng));
    pop.popularity.push_back(1.0 / std::pow(static_cast<double>(i + 1), c.zipf_s));
    pop.seeders.push_back({pop.catalog.back(), make_peer_id("-SD0100-", i, catalog_rng),
                           {kSeederRange.at(i + 1), kSeederPort}});
  }

  for (std::uint32_t i = 0; i < c.web_hosts; ++i) {
    pop.web_hosts.push_back({kWebRange.at(i + 1), 80});
  }

  const auto ports = draw_ports(c, client_rng);
  const std::vector<double> mode_weights{c.usage.tracker_via_tor, c.usage.peers_via_tor,
                                         c.usage.both};
  const std::uint32_t per_client = std::min(c.torrents_per_client, c.catalog_size);

  for (std::uint32_t i = 0; i < c.clients; ++i) {
    actors::ClientProfile p;
    p.id = i + 1;
    p.public_ip = kClientRange.at(i + 1);
    p.usage_mode = static_cast<actors::UsageMode>(client_rng.weighted(mode_weights));
    p.announce_includes_ip = client_rng.bernoulli(c.announce_includes_ip);
    p.exthandshake_includes_ip = client_rng.bernoulli(c.exthandshake_includes_ip);
    p.dht_enabled = client_rng.bernoulli(c.dht_enabled);
    p.listen_port = ports[i];
    p.peer_id = make_peer_id("-SM0100-", i, client_rng);
    p.announce_period = c.announce_period;
    p.start_offset = static_cast<SimTime>(
        client_rng.uniform(0, static_cast<std::uint64_t>(c.announce_period - 1)));

    std::vector<double> weights = pop.popularity;
    for (std::uint32_t t = 0; t < per_client; ++t) {
      const std::size_t pick = client_rng.weighted(weights);
      weights[pick] = 0.0;
      p.torrents.push_back(pop.catalog[pick]);
    }

    std::map<net::Endpoint, std::vector<SimTime>> visits;
    if (c.web_visits_per_hour > 0 && !pop.web_hosts.empty()) {
      const double mean_gap_ms = 3600.0 * kMillisPerSecond / c.web_visits_per_hour;
      double t = 0.0;
      for (;;) {
        t += -std::log(1.0 - web_rng.unit()) * mean_gap_ms;
        if (t >= static_cast<double>(c.duration)) break;
        visits[pop.web_hosts[web_rng.index(pop.web_hosts.size())]].push_back(
            static_cast<SimTime>(t));
      }
    }
    for (auto& [host, times] : visits) p.web_targets.push_back({host, std::move(times)});
    pop.clients.push_back(std::move(p));
  }
  return pop;
}

std::string dump_population(const Population& pop) {
  std::ostringstream out;
  for (const auto& r : pop.directory.relays()) {
    out << "relay " << r.id << ' ' << r.address.to_string() << ' ' << int(r.roles) << '\n';
  }
  for (std::size_t i = 0; i < pop.catalog.size(); ++i) {
    out << "torrent " << pop.catalog[i].to_hex() << ' ' << pop.popularity[i] << '\n';
  }
  for (const auto& s : pop.seeders) {
    out << "seeder " << s.info_hash.to_hex() << ' ' << s.endpoint.to_string() << '\n';
  }
  for (const auto& p : pop.clients) {
    out << "client " << p.id << ' ' << p.public_ip.to_string() << ' ' << actors::to_string(p.usage_mode)
        << ' ' << p.announce_includes_ip << p.exthandshake_includes_ip << p.dht_enabled << ' '
        << p.listen_port << ' ' << p.peer_id.to_hex() << ' ' << p.start_offset;
    for (const auto& h : p.torrents) out << ' ' << h.to_hex();
    for (const auto& w : p.web_targets) {
      out << ' ' << w.host.to_string() << '@';
      for (auto t : w.visits) out << t << ',';
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void add(actors::ClientStats& into, const actors::ClientStats& s) {
  into.announces += s.announces;
  into.peer_attempts += s.peer_attempts;
  into.peer_connected += s.peer_connected;
  into.dht_announces += s.dht_announces;
  into.dht_failures += s.dht_failures;
  into.web_requests += s.web_requests;
  into.unparsed_responses += s.unparsed_responses;
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& config, RunOptions options) {
  const auto started = Clock::now();
  Population pop = generate_population(config);
  Rng root(config.seed);
  root.fork(kCatalogStream);
  root.fork(kClientStream);
  root.fork(kWebStream);
  Rng dht_rng = root.fork(kDhtStream);
  const std::uint64_t overlay_seed = root.fork(kOverlayStream).next();
  Rng attacker_rng = root.fork(kAttackerStream);

  RunResult result;
  result.config = config;
  result.clients = pop.clients;

  // --- world -------------------------------------------------------------
  onion::Overlay overlay(pop.directory, overlay_seed, options.audit_privacy);
  actors::Internet internet;
  dht::DhtNetwork dht_net = dht::DhtNetwork::build(config.dht_nodes, kDhtRange, kDhtPort, dht_rng);
  actors::Tracker tracker;

  internet.listen(kTrackerEndpoint, [&tracker](const onion::Delivery& d) -> std::optional<Bytes> {
    return tracker.handle(d.payload, d.source, d.time);
  });
  for (const auto& host : pop.web_hosts) internet.listen(host, actors::web_respond);
  for (const auto& s : pop.seeders) {
    actors::PeerListener listener(s.peer_id, s.endpoint.port, "SimSeed/1.0");
    internet.listen(s.endpoint, [listener](const onion::Delivery& d) { return listener.respond(d); });
    btproto::AnnounceRequest req;
    req.info_hash = s.info_hash;
    req.peer_id = s.peer_id;
    req.port = s.endpoint.port;
    req.event = btproto::AnnounceEvent::Started;
    tracker.serve(req, s.endpoint.ip, 0);
  }

  std::vector<actors::Client> clients;
  clients.reserve(pop.clients.size());
  for (const auto& p : pop.clients) clients.emplace_back(p);
  for (const auto& c : clients) {
    internet.listen({c.profile().public_ip, c.profile().listen_port},
                    [listener = c.listener()](const onion::Delivery& d) { return listener.respond(d); });
  }

  // --- attacker ------------------------------------------------------------
  actors::AttackerPeer attacker(kAttackerPeerEndpoint,
                                make_peer_id("-AT0100-", 0, attacker_rng));
  internet.listen(kAttackerPeerEndpoint,
                  [&attacker](const onion::Delivery& d) { return attacker.respond(d); });

  onion::ObservationLog exit_log;
  actors::ExposureModel exposure;
  for (auto index : instrumented_exit_indices(config)) {
    const onion::RelayId relay = pop.exits.at(index);
    onion::Rewriter rewriter;
    if (config.attacker.hijack_enabled) {
      rewriter = attacks::make_peer_list_rewriter(attacker.endpoint(), config.attacker.rewrite_policy);
    }
    overlay.instrument_exit(relay, exit_log, std::move(rewriter));
    exposure.instrumented_exits.insert(relay);
    result.instrumented_relays.push_back(relay);
  }
  exposure.hijack_active = config.attacker.hijack_enabled && !exposure.instrumented_exits.empty();

  actors::World world{overlay, internet, dht_net, result.ledger, kTrackerEndpoint, exposure,
                      config.max_peer_connections};

  // --- events --------------------------------------------------------------
  EventQueue queue;
  const SimTime end = config.duration;
  std::function<void(std::size_t, SimTime)> announce_tick = [&](std::size_t i, SimTime now) {
    auto& client = clients[i];
    for (std::size_t t = 0; t < client.profile().torrents.size(); ++t) client.announce(world, t, now);
    const SimTime next = now + client.profile().announce_period;
    if (next < end) queue.schedule(next, [&, i](SimTime at) { announce_tick(i, at); });
  };
  std::function<void(std::size_t, SimTime)> dht_tick = [&](std::size_t i, SimTime now) {
    clients[i].dht_maintenance(world, now);
    const SimTime next = now + kDhtRefreshPeriod;
    if (next < end) queue.schedule(next, [&, i](SimTime at) { dht_tick(i, at); });
  };

  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& p = clients[i].profile();
    if (p.start_offset < end) {
      queue.schedule(p.start_offset, [&, i](SimTime at) { announce_tick(i, at); });
      if (p.dht_enabled) queue.schedule(p.start_offset, [&, i](SimTime at) { dht_tick(i, at); });
    }
  }
  std::vector<std::pair<SimTime, std::pair<std::size_t, std::size_t>>> visits;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& targets = clients[i].profile().web_targets;
    for (std::size_t w = 0; w < targets.size(); ++w) {
      for (auto t : targets[w].visits) visits.push_back({t, {i, w}});
    }
  }
  std::stable_sort(visits.begin(), visits.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [t, who] : visits) {
    const auto [i, w] = who;
    queue.schedule(t, [&, i = i, w = w](SimTime at) {
      clients[i].browse(world, clients[i].profile().web_targets[w], at);
    });
  }

  result.diagnostics.events = queue.run_until(end);

  // --- attacks (attacker vantage only) --------------------------------------
  result.observations = exit_log.entries();
  result.attacker_log = attacker.log();
  const attacks::Observations observations(result.observations);
  attacks::FindingIds ids;
  std::map<attacks::AttackKind, double> runtime;

  auto timed = [&](attacks::AttackKind kind, auto&& body) {
    const auto t0 = Clock::now();
    auto found = body();
    runtime[kind] = elapsed_ms(t0);
    for (auto& f : found) result.findings.push_back(std::move(f));
  };
  if (config.attacker.payload_enabled) {
    timed(attacks::AttackKind::Payload, [&] {
      return attacks::attack_payload_inspection(observations, ids, &result.diagnostics.payload);
    });
  }
  if (config.attacker.hijack_enabled) {
    const attacks::RelayAddressBook relays(overlay.directory());
    timed(attacks::AttackKind::Hijack, [&] {
      return attacks::attack_hijack(observations, result.attacker_log, relays, ids,
                                    config.attacker.linkage_window);
    });
  }
  if (config.attacker.prober_enabled) {
    attacks::DhtProber prober(dht_net, kProberEndpoint);
    timed(attacks::AttackKind::Dht, [&] {
      return attacks::attack_dht(observations, prober, end, ids, &result.diagnostics.dht);
    });
    result.diagnostics.prober_lookups = prober.lookups();
  }
  {
    const auto t0 = Clock::now();
    attacks::ProfileOptions popts;
    popts.include_ambiguous = config.attacker.profile_include_ambiguous;
    result.profiles = attacks::attack_profile_multiplexed(result.findings, observations, popts);
    runtime[attacks::AttackKind::Profile] = elapsed_ms(t0);
  }

  // --- scoring (the only ledger reader) -------------------------------------
  attacks::ScoreOptions sopts;
  sopts.include_payload_in_headline = config.attacker.include_payload_in_headline;
  result.scores = attacks::score_findings(result.findings, result.profiles, result.ledger, sopts);
  for (auto& row : result.scores.rows) row.runtime_ms = runtime[row.attack];
  if (config.clients == 0) result.scores.rows.clear();

  // --- audit and bookkeeping ------------------------------------------------
  if (options.audit_privacy) result.privacy_violations = overlay.audit_privacy();
  for (const auto& node : dht_net.nodes()) {
    result.dht_store.insert(result.dht_store.end(), node.store().begin(), node.store().end());
  }
  result.circuits = overlay.circuits();
  auto& d = result.diagnostics;
  d.observations = result.observations.size();
  d.attacker_peer_entries = result.attacker_log.size();
  d.ledger_records = result.ledger.size();
  d.hop_records = overlay.hop_records().size();
  d.privacy_violations = result.privacy_violations.size();
  d.circuits = overlay.circuits().size();
  d.streams = overlay.streams().size();
  for (const auto& c : clients) add(d.clients, c.stats());
  result.wall_ms = elapsed_ms(started);
  return result;
}

}  // namespace exitsim::harness
