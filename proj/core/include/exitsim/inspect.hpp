#pragma once

#include <string>
#include <utility>
#include <vector>

#include "exitsim/bytes.hpp"

namespace exitsim::harness {

/// A hex fixture: `#` lines are comments, `# expect: key=value` lines are
/// annotations, `# format: name` forces a decoder. Everything else is hex.
struct Fixture {
  std::string format = "auto";
  std::vector<std::pair<std::string, std::string>> expect;
  Bytes bytes;
};

Fixture parse_fixture(const std::string& text);
Fixture load_fixture(const std::string& path);

/// Decoded view of a wire frame as flat key=value pairs. Decoding failures
/// show up as kind=error plus error=<code>.
struct Inspection {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> fields;

  /// Value of the first field named `key`, or nullptr.
  const std::string* find(std::string_view key) const;
};

/// `format` is one of auto, bencode, announce-query, announce-response,
/// compact-peers, peer-wire, extended-handshake, krpc.
Inspection inspect_frame(BytesView bytes, const std::string& format = "auto");

/// Human-readable rendering for the CLI.
std::string render(const Inspection& inspection);

}  // namespace exitsim::harness
