#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exitsim/net.hpp"
#include "exitsim/onion.hpp"
#include "exitsim/sim_time.hpp"

namespace exitsim::harness {

enum class ActionKind { Announce, PeerHandshake, WebRequest, DhtQuery };
enum class Application { Tracker, PeerWire, Web, Dht };

const char* to_string(ActionKind k);
const char* to_string(Application a);
std::optional<ActionKind> action_from_string(std::string_view s);
std::optional<Application> application_from_string(std::string_view s);

/// Attack families a message exposes its sender to. Bit set.
enum Exposure : std::uint8_t {
  kExposesPayload = 1,
  kExposesHijack = 2,
  kExposesDht = 4,
};

/// One message sent by a client, as only the simulator can know it.
struct LedgerRecord {
  std::uint64_t seq = 0;
  SimTime time = 0;
  onion::ClientId client = 0;
  net::Ipv4 public_ip;
  ActionKind kind = ActionKind::Announce;
  Application app = Application::Tracker;
  onion::CircuitId circuit = 0;  // 0 when sent directly
  onion::StreamId stream = 0;
  std::optional<onion::RelayId> exit;
  net::Endpoint destination;
  std::string digest;  // of the plaintext payload
  std::uint8_t exposes = 0;

  friend bool operator==(const LedgerRecord&, const LedgerRecord&) = default;
};

/// Append-only. Attack code never receives one of these.
class GroundTruthLedger {
 public:
  const LedgerRecord& append(LedgerRecord record);
  const std::vector<LedgerRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<LedgerRecord> records_;
};

}  // namespace exitsim::harness
