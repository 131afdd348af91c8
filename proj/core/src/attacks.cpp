#include "exitsim/attacks.hpp"

#include <algorithm>
#include <tuple>

namespace exitsim::attacks {

const char* to_string(AttackKind a) {
  switch (a) {
    case AttackKind::Payload: return "PAYLOAD";
    case AttackKind::Hijack: return "HIJACK";
    case AttackKind::Dht: return "DHT";
    case AttackKind::Profile: return "PROFILE";
  }
  return "";
}

const char* to_string(Confidence c) {
  switch (c) {
    case Confidence::VerifiedTransport: return "VERIFIED_TRANSPORT";
    case Confidence::UnverifiedSelfReport: return "UNVERIFIED_SELF_REPORT";
    case Confidence::Ambiguous: return "AMBIGUOUS";
  }
  return "";
}

std::optional<AttackKind> attack_from_string(std::string_view s) {
  if (s == "PAYLOAD") return AttackKind::Payload;
  if (s == "HIJACK") return AttackKind::Hijack;
  if (s == "DHT") return AttackKind::Dht;
  if (s == "PROFILE") return AttackKind::Profile;
  return std::nullopt;
}

std::optional<Confidence> confidence_from_string(std::string_view s) {
  if (s == "VERIFIED_TRANSPORT") return Confidence::VerifiedTransport;
  if (s == "UNVERIFIED_SELF_REPORT") return Confidence::UnverifiedSelfReport;
  if (s == "AMBIGUOUS") return Confidence::Ambiguous;
  return std::nullopt;
}

const char* to_string(RewritePolicy p) {
  return p == RewritePolicy::ReplaceAll ? "replace-all" : "prepend";
}

std::optional<RewritePolicy> rewrite_policy_from_string(std::string_view s) {
  if (s == "replace-all") return RewritePolicy::ReplaceAll;
  if (s == "prepend") return RewritePolicy::Prepend;
  return std::nullopt;
}

RelayAddressBook::RelayAddressBook(const onion::Directory& directory) {
  for (const auto& r : directory.relays()) addresses_.insert(r.address);
}

// ---------------------------------------------------------------------------

std::vector<Finding> attack_payload_inspection(Observations observations, FindingIds& ids,
                                               PayloadDiagnostics* diag) {
  std::vector<Finding> out;
  PayloadDiagnostics local;
  auto emit = [&](const ExitObservation& obs, std::vector<net::Ipv4> addresses) {
    std::sort(addresses.begin(), addresses.end());
    addresses.erase(std::unique(addresses.begin(), addresses.end()), addresses.end());
    for (auto ip : addresses) {
      Finding f;
      f.id = ids.next();
      f.attack = AttackKind::Payload;
      f.circuit = obs.circuit;
      f.streams = {obs.stream};
      f.claimed_ip = ip;
      f.candidates = {ip};
      f.confidence = Confidence::UnverifiedSelfReport;
      f.evidence.observations = {obs.id};
      out.push_back(std::move(f));
    }
  };

  for (const auto& obs : observations) {
    if (obs.direction != onion::Direction::Outbound) continue;
    const auto kind = btproto::classify(obs.payload);
    if (kind != btproto::FrameKind::AnnounceQuery && kind != btproto::FrameKind::PeerWire) continue;
    ++local.inspected;
    try {
      if (kind == btproto::FrameKind::AnnounceQuery) {
        const auto req = btproto::parse_announce_query(obs.payload);
        if (req.ip) emit(obs, {*req.ip});
      } else {
        const auto opening = btproto::parse_peer_wire_opening(obs.payload);
        if (!opening.extended) continue;
        std::vector<net::Ipv4> found;
        if (opening.extended->yourip) found.push_back(*opening.extended->yourip);
        if (opening.extended->ipv4) found.push_back(*opening.extended->ipv4);
        if (!found.empty()) emit(obs, std::move(found));
      }
    } catch (const std::exception&) {
      ++local.unparsed;
    }
  }
  if (diag) *diag = local;
  return out;
}

// ---------------------------------------------------------------------------

onion::Rewriter make_peer_list_rewriter(PeerEndpoint attacker, RewritePolicy policy) {
  return [attacker, policy](const ExitObservation& inbound) -> std::optional<Bytes> {
    if (btproto::classify(inbound.payload) != btproto::FrameKind::AnnounceResponse) {
      return std::nullopt;
    }
    btproto::AnnounceResponse resp;
    try {
      resp = btproto::parse_announce_response(inbound.payload);
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (policy == RewritePolicy::ReplaceAll) {
      resp.peers = {attacker};
    } else {
      resp.peers.insert(resp.peers.begin(), attacker);
    }
    const auto encoding = btproto::response_is_compact(inbound.payload)
                              ? btproto::PeerEncoding::Compact
                              : btproto::PeerEncoding::Dictionary;
    return btproto::build_announce_response(resp, encoding);
  };
}

std::vector<Finding> attack_hijack(Observations observations, PeerLog peer_log,
                                   const RelayAddressBook& relays, FindingIds& ids,
                                   SimTime window) {
  struct SeenAnnounce {
    SimTime time;
    std::uint64_t observation;
    CircuitId circuit;
    StreamId stream;
  };
  std::map<std::pair<InfoHash, btproto::PeerId>, std::vector<SeenAnnounce>> announces;
  for (const auto& obs : observations) {
    if (obs.direction != onion::Direction::Outbound) continue;
    if (btproto::classify(obs.payload) != btproto::FrameKind::AnnounceQuery) continue;
    try {
      const auto req = btproto::parse_announce_query(obs.payload);
      announces[{req.info_hash, req.peer_id}].push_back({obs.time, obs.id, obs.circuit, obs.stream});
    } catch (const std::exception&) {
    }
  }

  std::vector<Finding> out;
  for (const auto& entry : peer_log) {
    if (relays.is_relay(entry.source)) continue;
    auto it = announces.find({entry.info_hash, entry.peer_id});
    if (it == announces.end()) continue;
    const SeenAnnounce* best = nullptr;
    for (const auto& a : it->second) {
      if (a.time > entry.time || entry.time - a.time > window) continue;
      if (best == nullptr || a.time >= best->time) best = &a;
    }
    if (best == nullptr) continue;

    Finding f;
    f.id = ids.next();
    f.attack = AttackKind::Hijack;
    f.circuit = best->circuit;
    f.streams = {best->stream};
    f.claimed_ip = entry.source;
    f.candidates = {entry.source};
    f.confidence = Confidence::VerifiedTransport;
    f.evidence.observations = {best->observation};
    f.evidence.peer_log_entries = {entry.id};
    f.evidence.info_hash = entry.info_hash;
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ObservedPair> extract_observed_pairs(Observations observations) {
  std::vector<ObservedPair> pairs;
  std::map<std::tuple<CircuitId, InfoHash, std::uint16_t>, std::size_t> index;

  auto add = [&](const ExitObservation& obs, const InfoHash& h, std::uint16_t port) {
    auto [it, inserted] = index.try_emplace({obs.circuit, h, port}, pairs.size());
    if (inserted) pairs.push_back({obs.circuit, h, port, {}, {}});
    auto& p = pairs[it->second];
    p.observations.push_back(obs.id);
    if (std::find(p.streams.begin(), p.streams.end(), obs.stream) == p.streams.end()) {
      p.streams.push_back(obs.stream);
    }
  };

  for (const auto& obs : observations) {
    if (obs.direction != onion::Direction::Outbound) continue;
    const auto kind = btproto::classify(obs.payload);
    try {
      if (kind == btproto::FrameKind::AnnounceQuery) {
        const auto req = btproto::parse_announce_query(obs.payload);
        add(obs, req.info_hash, req.port);
      } else if (kind == btproto::FrameKind::PeerWire) {
        const auto opening = btproto::parse_peer_wire_opening(obs.payload);
        if (opening.extended && opening.extended->port) {
          add(obs, opening.handshake.info_hash, *opening.extended->port);
        }
      }
    } catch (const std::exception&) {
    }
  }
  return pairs;
}

std::vector<Finding> attack_dht(Observations observations, DhtProber& prober, SimTime now,
                                FindingIds& ids, DhtDiagnostics* diag) {
  DhtDiagnostics local;
  std::map<InfoHash, std::optional<std::set<PeerEndpoint>>> lookups;
  std::vector<Finding> out;

  for (const auto& pair : extract_observed_pairs(observations)) {
    ++local.pairs;
    auto [it, fresh] = lookups.try_emplace(pair.info_hash);
    if (fresh) {
      try {
        it->second = prober.get_peers(pair.info_hash, now);
      } catch (const dht::DhtError&) {
        it->second = std::nullopt;
      }
    }
    if (!it->second) {
      ++local.skipped_lookups;
      continue;
    }
    std::vector<net::Ipv4> matches;
    for (const auto& ep : *it->second) {
      if (ep.port == pair.port) matches.push_back(ep.ip);
    }
    std::sort(matches.begin(), matches.end());
    matches.erase(std::unique(matches.begin(), matches.end()), matches.end());
    if (matches.empty()) {
      ++local.no_match;
      continue;
    }

    Finding f;
    f.id = ids.next();
    f.attack = AttackKind::Dht;
    f.circuit = pair.circuit;
    f.streams = pair.streams;
    f.candidates = matches;
    if (matches.size() == 1) {
      f.claimed_ip = matches.front();
      f.confidence = Confidence::VerifiedTransport;
    } else {
      f.confidence = Confidence::Ambiguous;
    }
    f.evidence.observations = pair.observations;
    f.evidence.dht_snapshot.assign(it->second->begin(), it->second->end());
    f.evidence.info_hash = pair.info_hash;
    f.evidence.port = pair.port;
    out.push_back(std::move(f));
  }
  if (diag) *diag = local;
  return out;
}

// ---------------------------------------------------------------------------

bool is_web_request(BytesView payload) {
  for (std::string_view method : {"GET ", "POST ", "HEAD "}) {
    if (payload.substr(0, method.size()) == method) {
      const auto eol = payload.find("\r\n");
      return payload.substr(0, eol).find(" HTTP/1.") != BytesView::npos;
    }
  }
  return false;
}

std::vector<BrowsingProfile> attack_profile_multiplexed(std::span<const Finding> findings,
                                                        Observations observations,
                                                        ProfileOptions options) {
  struct Claim {
    std::set<net::Ipv4> ips;
    std::vector<std::uint64_t> findings;
  };
  std::map<CircuitId, Claim> claims;
  for (const auto& f : findings) {
    if (f.confidence == Confidence::VerifiedTransport && f.claimed_ip) {
      auto& c = claims[f.circuit];
      c.ips.insert(*f.claimed_ip);
      c.findings.push_back(f.id);
    } else if (f.confidence == Confidence::Ambiguous && options.include_ambiguous) {
      auto& c = claims[f.circuit];
      c.ips.insert(f.candidates.begin(), f.candidates.end());
      c.findings.push_back(f.id);
    }
  }

  std::map<net::Ipv4, BrowsingProfile> profiles;
  for (const auto& obs : observations) {
    if (obs.direction != onion::Direction::Outbound || !is_web_request(obs.payload)) continue;
    auto it = claims.find(obs.circuit);
    if (it == claims.end()) continue;
    const Claim& claim = it->second;
    if (claim.ips.size() != 1 && !options.include_ambiguous) continue;
    for (auto ip : claim.ips) {
      auto& p = profiles[ip];
      p.claimed_ip = ip;
      p.visits.push_back({obs.time, obs.destination, obs.circuit, obs.stream, obs.id});
      for (auto fid : claim.findings) {
        if (std::find(p.source_findings.begin(), p.source_findings.end(), fid) ==
            p.source_findings.end()) {
          p.source_findings.push_back(fid);
        }
      }
    }
  }

  std::vector<BrowsingProfile> out;
  out.reserve(profiles.size());
  for (auto& [ip, p] : profiles) {
    std::sort(p.source_findings.begin(), p.source_findings.end());
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------

const MetricRow& Scores::row(AttackKind a) const {
  for (const auto& r : rows) {
    if (r.attack == a) return r;
  }
  throw std::out_of_range(std::string("no metric row for ") + to_string(a));
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Scores score_findings(std::span<const Finding> findings, std::span<const BrowsingProfile> profiles,
                      const harness::GroundTruthLedger& ledger, ScoreOptions options) {
  std::map<CircuitId, net::Ipv4> circuit_owner;
  std::map<StreamId, net::Ipv4> stream_owner;
  std::map<AttackKind, std::set<net::Ipv4>> vulnerable;
  for (const auto& rec : ledger.records()) {
    if (rec.circuit != 0) {
      circuit_owner.emplace(rec.circuit, rec.public_ip);
      stream_owner.emplace(rec.stream, rec.public_ip);
    }
    if (rec.exposes & harness::kExposesPayload) vulnerable[AttackKind::Payload].insert(rec.public_ip);
    if (rec.exposes & harness::kExposesHijack) vulnerable[AttackKind::Hijack].insert(rec.public_ip);
    if (rec.exposes & harness::kExposesDht) vulnerable[AttackKind::Dht].insert(rec.public_ip);
  }

  Scores scores;
  std::set<net::Ipv4> headline;
  for (AttackKind a : {AttackKind::Payload, AttackKind::Hijack, AttackKind::Dht}) {
    MetricRow row;
    row.attack = a;
    row.headline = a != AttackKind::Payload || options.include_payload_in_headline;
    const auto& exposed = vulnerable[a];
    std::set<net::Ipv4> caught;
    for (const auto& f : findings) {
      if (f.attack != a) continue;
      ++row.findings;
      auto owner = circuit_owner.find(f.circuit);
      if (owner == circuit_owner.end()) {
        throw ScoreError("LedgerMismatch: finding " + std::to_string(f.id) +
                         " names unknown circuit " + std::to_string(f.circuit));
      }
      const net::Ipv4 truth = owner->second;
      if (f.unique_claim()) {
        ++row.unique_claims;
        if (*f.claimed_ip == truth) {
          ++row.correct_unique;
          if (exposed.count(truth)) caught.insert(truth);
          if (row.headline) headline.insert(truth);
        }
      } else {
        ++row.ambiguous;
        if (std::find(f.candidates.begin(), f.candidates.end(), truth) != f.candidates.end()) {
          ++row.ambiguous_contains_truth;
        }
      }
    }
    row.precision = ratio(row.correct_unique, row.unique_claims);
    row.vulnerable_clients = exposed.size();
    row.deanonymized_clients = caught.size();
    row.recall = ratio(caught.size(), exposed.size());
    row.ambiguous_rate = ratio(row.ambiguous_contains_truth, row.ambiguous);
    scores.rows.push_back(row);
  }

  MetricRow profile;
  profile.attack = AttackKind::Profile;
  profile.headline = false;
  profile.findings = profiles.size();
  for (const auto& p : profiles) {
    for (const auto& v : p.visits) {
      ++scores.attributed_web_streams;
      auto owner = stream_owner.find(v.stream);
      if (owner == stream_owner.end()) {
        throw ScoreError("LedgerMismatch: profiled stream " + std::to_string(v.stream) +
                         " is not in the ledger");
      }
      if (owner->second == p.claimed_ip) ++scores.correct_web_streams;
    }
  }
  profile.unique_claims = scores.attributed_web_streams;
  profile.correct_unique = scores.correct_web_streams;
  profile.precision = ratio(scores.correct_web_streams, scores.attributed_web_streams);
  scores.profile_accuracy = profile.precision;
  scores.rows.push_back(profile);
  scores.headline_deanonymized_ips = headline.size();
  return scores;
}

}  // namespace exitsim::attacks
