#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "exitsim/bytes.hpp"

// Bencoding: the serialization under tracker responses, extended handshakes
// and KRPC datagrams.
//
//   integer     i<decimal>e          i42e, i-3e     (no leading zeros, no -0)
//   byte string <length>:<bytes>     4:spam
//   list        l<values>e           l1:ai1ee
//   dictionary  d<key><value>...e    keys are byte strings, sorted bytewise
namespace exitsim::bencode {

class Value;

using Integer = std::int64_t;
using String = Bytes;
using List = std::vector<Value>;
// std::less on std::string compares like memcmp, which is exactly the
// canonical bytewise key order.
using Dict = std::map<String, Value, std::less<>>;

class Value {
 public:
  enum class Kind { Integer, String, List, Dict };

  Value() : data_(Integer{0}) {}
  Value(Integer v) : data_(v) {}
  Value(int v) : data_(Integer{v}) {}
  Value(String v) : data_(std::move(v)) {}
  Value(const char* v) : data_(String(v)) {}
  Value(List v) : data_(std::move(v)) {}
  Value(Dict v) : data_(std::move(v)) {}

  Kind kind() const { return static_cast<Kind>(data_.index()); }
  bool is_int() const { return kind() == Kind::Integer; }
  bool is_string() const { return kind() == Kind::String; }
  bool is_list() const { return kind() == Kind::List; }
  bool is_dict() const { return kind() == Kind::Dict; }

  Integer as_int() const { return std::get<Integer>(data_); }
  const String& as_string() const { return std::get<String>(data_); }
  const List& as_list() const { return std::get<List>(data_); }
  List& as_list() { return std::get<List>(data_); }
  const Dict& as_dict() const { return std::get<Dict>(data_); }
  Dict& as_dict() { return std::get<Dict>(data_); }

  /// Dictionary lookup; nullptr when this is not a dict or the key is absent.
  const Value* find(std::string_view key) const;

  friend bool operator==(const Value&, const Value&) = default;

 private:
  std::variant<Integer, String, List, Dict> data_;
};

enum class Errc {
  TruncatedInput,
  TrailingBytes,
  InvalidInteger,
  DuplicateKey,
  NonCanonicalOrder,
  DepthExceeded,
  UnexpectedByte,
};

const char* to_string(Errc code);

class DecodeError : public std::runtime_error {
 public:
  DecodeError(Errc code, std::size_t offset);
  Errc code() const { return code_; }
  std::size_t offset() const { return offset_; }

 private:
  Errc code_;
  std::size_t offset_;
};

enum class Mode { Strict, Lenient };

inline constexpr int kMaxDepth = 64;

struct Decoded {
  Value value;
  /// False when lenient decoding accepted unsorted keys or a zero-padded
  /// string length. Always true after a successful strict decode.
  bool canonical = true;
};

/// Decodes exactly one value spanning the whole input. Throws DecodeError.
Decoded decode(BytesView input, Mode mode = Mode::Strict);

/// Decodes one value from the front of `input` and reports how many bytes it
/// used. For framing code that has trailing data of its own.
Decoded decode_prefix(BytesView input, std::size_t& consumed, Mode mode = Mode::Strict);

/// Canonical encoding. Total on every Value.
Bytes encode(const Value& value);

/// Human-readable rendering for CLI output: printable strings are quoted,
/// binary strings are shown as hex.
std::string to_display(const Value& value, int indent = 0);

}  // namespace exitsim::bencode
