#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "exitsim/actors.hpp"
#include "exitsim/attacks.hpp"
#include "exitsim/ledger.hpp"
#include "exitsim/onion.hpp"

// One JSON object per line, payloads hex-encoded. Each to_line() has a
// matching parser so stored runs can be rescored.
namespace exitsim::harness {

class JsonlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_line(const onion::ExitObservation& obs);
std::string to_line(const actors::AttackerPeerEntry& entry);
std::string to_line(const LedgerRecord& record);
std::string to_line(const attacks::Finding& finding);
std::string to_line(const attacks::BrowsingProfile& profile);

onion::ExitObservation observation_from_line(std::string_view line);
actors::AttackerPeerEntry attacker_entry_from_line(std::string_view line);
LedgerRecord ledger_record_from_line(std::string_view line);
attacks::Finding finding_from_line(std::string_view line);
attacks::BrowsingProfile profile_from_line(std::string_view line);

/// "a.b.c.d:port"; throws JsonlError.
net::Endpoint parse_endpoint(std::string_view text);

/// Non-empty lines of a file; throws JsonlError when it cannot be read.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace exitsim::harness
