#include "exitsim/ledger.hpp"

namespace exitsim::harness {

const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Announce: return "ANNOUNCE";
    case ActionKind::PeerHandshake: return "PEER_HANDSHAKE";
    case ActionKind::WebRequest: return "WEB_REQUEST";
    case ActionKind::DhtQuery: return "DHT_QUERY";
  }
  return "";
}

const char* to_string(Application a) {
  switch (a) {
    case Application::Tracker: return "TRACKER";
    case Application::PeerWire: return "PEER_WIRE";
    case Application::Web: return "WEB";
    case Application::Dht: return "DHT";
  }
  return "";
}

std::optional<ActionKind> action_from_string(std::string_view s) {
  for (auto k : {ActionKind::Announce, ActionKind::PeerHandshake, ActionKind::WebRequest,
                 ActionKind::DhtQuery}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

std::optional<Application> application_from_string(std::string_view s) {
  for (auto a : {Application::Tracker, Application::PeerWire, Application::Web, Application::Dht}) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

const LedgerRecord& GroundTruthLedger::append(LedgerRecord record) {
  record.seq = records_.size() + 1;
  records_.push_back(std::move(record));
  return records_.back();
}

}  // namespace exitsim::harness
