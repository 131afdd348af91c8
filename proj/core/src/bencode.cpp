#include "exitsim/bencode.hpp"

#include <charconv>
#include <limits>

namespace exitsim::bencode {

const Value* Value::find(std::string_view key) const {
  if (!is_dict()) return nullptr;
  const auto& d = as_dict();
  auto it = d.find(key);
  return it == d.end() ? nullptr : &it->second;
}

const char* to_string(Errc code) {
  switch (code) {
    case Errc::TruncatedInput: return "TruncatedInput";
    case Errc::TrailingBytes: return "TrailingBytes";
    case Errc::InvalidInteger: return "InvalidInteger";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::NonCanonicalOrder: return "NonCanonicalOrder";
    case Errc::DepthExceeded: return "DepthExceeded";
    case Errc::UnexpectedByte: return "UnexpectedByte";
  }
  return "Unknown";
}

DecodeError::DecodeError(Errc code, std::size_t offset)
    : std::runtime_error(std::string("bencode: ") + to_string(code) + " at offset " +
                         std::to_string(offset)),
      code_(code),
      offset_(offset) {}

namespace {

class Parser {
 public:
  Parser(BytesView in, Mode mode) : in_(in), mode_(mode) {}

  Value parse_value(int depth) {
    if (depth > kMaxDepth) throw DecodeError(Errc::DepthExceeded, pos_);
    const char c = peek();
    if (c == 'i') return parse_int();
    if (c >= '0' && c <= '9') return parse_string();
    if (c == 'l') {
      ++pos_;
      List out;
      while (peek() != 'e') out.push_back(parse_value(depth + 1));
      ++pos_;
      return out;
    }
    if (c == 'd') {
      ++pos_;
      Dict out;
      const String* prev = nullptr;
      while (peek() != 'e') {
        const std::size_t key_pos = pos_;
        if (peek() < '0' || peek() > '9') throw DecodeError(Errc::UnexpectedByte, pos_);
        String key = parse_string();
        if (prev != nullptr && key <= *prev) {
          if (key == *prev || out.count(key) != 0) throw DecodeError(Errc::DuplicateKey, key_pos);
          if (mode_ == Mode::Strict) throw DecodeError(Errc::NonCanonicalOrder, key_pos);
          canonical_ = false;
        } else if (out.count(key) != 0) {
          throw DecodeError(Errc::DuplicateKey, key_pos);
        }
        Value v = parse_value(depth + 1);
        auto [it, inserted] = out.emplace(std::move(key), std::move(v));
        prev = &it->first;
      }
      ++pos_;
      return out;
    }
    throw DecodeError(Errc::UnexpectedByte, pos_);
  }

  std::size_t pos() const { return pos_; }
  bool canonical() const { return canonical_; }

 private:
  char peek() const {
    if (pos_ >= in_.size()) throw DecodeError(Errc::TruncatedInput, pos_);
    return in_[pos_];
  }

  Integer parse_int() {
    const std::size_t start = pos_;
    ++pos_;  // 'i'
    const std::size_t end = in_.find('e', pos_);
    if (end == BytesView::npos) throw DecodeError(Errc::TruncatedInput, in_.size());
    const BytesView digits = in_.substr(pos_, end - pos_);
    const bool neg = !digits.empty() && digits[0] == '-';
    const BytesView mag = neg ? digits.substr(1) : digits;
    if (mag.empty()) throw DecodeError(Errc::InvalidInteger, start);
    for (char c : mag) {
      if (c < '0' || c > '9') throw DecodeError(Errc::InvalidInteger, start);
    }
    if (mag.size() > 1 && mag[0] == '0') throw DecodeError(Errc::InvalidInteger, start);
    if (neg && mag == "0") throw DecodeError(Errc::InvalidInteger, start);
    Integer v = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc{} || p != digits.data() + digits.size()) {
      throw DecodeError(Errc::InvalidInteger, start);
    }
    pos_ = end + 1;
    return v;
  }

  String parse_string() {
    const std::size_t start = pos_;
    const std::size_t colon = in_.find(':', pos_);
    if (colon == BytesView::npos) throw DecodeError(Errc::TruncatedInput, in_.size());
    const BytesView digits = in_.substr(pos_, colon - pos_);
    for (char c : digits) {
      if (c < '0' || c > '9') throw DecodeError(Errc::InvalidInteger, start);
    }
    if (digits.size() > 1 && digits[0] == '0') {
      if (mode_ == Mode::Strict) throw DecodeError(Errc::InvalidInteger, start);
      canonical_ = false;
    }
    std::uint64_t len = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), len);
    if (ec != std::errc{}) throw DecodeError(Errc::InvalidInteger, start);
    pos_ = colon + 1;
    if (len > in_.size() - pos_) throw DecodeError(Errc::TruncatedInput, in_.size());
    String out(in_.substr(pos_, len));
    pos_ += len;
    return out;
  }

  BytesView in_;
  Mode mode_;
  std::size_t pos_ = 0;
  bool canonical_ = true;
};

void encode_into(const Value& v, Bytes& out) {
  switch (v.kind()) {
    case Value::Kind::Integer:
      out += 'i';
      out += std::to_string(v.as_int());
      out += 'e';
      break;
    case Value::Kind::String:
      out += std::to_string(v.as_string().size());
      out += ':';
      out += v.as_string();
      break;
    case Value::Kind::List:
      out += 'l';
      for (const auto& item : v.as_list()) encode_into(item, out);
      out += 'e';
      break;
    case Value::Kind::Dict:
      out += 'd';
      for (const auto& [key, item] : v.as_dict()) {
        out += std::to_string(key.size());
        out += ':';
        out += key;
        encode_into(item, out);
      }
      out += 'e';
      break;
  }
}

bool printable(const String& s) {
  for (unsigned char c : s) {
    if (c < 0x20 || c > 0x7E) return false;
  }
  return true;
}

}  // namespace

Decoded decode_prefix(BytesView input, std::size_t& consumed, Mode mode) {
  if (input.empty()) throw DecodeError(Errc::TruncatedInput, 0);
  Parser parser(input, mode);
  Value v = parser.parse_value(1);
  consumed = parser.pos();
  return {std::move(v), parser.canonical()};
}

Decoded decode(BytesView input, Mode mode) {
  std::size_t consumed = 0;
  Decoded out = decode_prefix(input, consumed, mode);
  if (consumed != input.size()) throw DecodeError(Errc::TrailingBytes, consumed);
  return out;
}

Bytes encode(const Value& value) {
  Bytes out;
  encode_into(value, out);
  return out;
}

std::string to_display(const Value& value, int indent) {
  const std::string pad(static_cast<std::size_t>(indent), ' ');
  switch (value.kind()) {
    case Value::Kind::Integer:
      return std::to_string(value.as_int());
    case Value::Kind::String: {
      const auto& s = value.as_string();
      if (printable(s)) return '"' + s + '"';
      return "<" + std::to_string(s.size()) + " bytes: " + to_hex(s) + ">";
    }
    case Value::Kind::List: {
      if (value.as_list().empty()) return "[]";
      std::string out = "[\n";
      for (const auto& item : value.as_list()) {
        out += pad + "  " + to_display(item, indent + 2) + "\n";
      }
      return out + pad + "]";
    }
    case Value::Kind::Dict: {
      if (value.as_dict().empty()) return "{}";
      std::string out = "{\n";
      for (const auto& [key, item] : value.as_dict()) {
        out += pad + "  " + key + ": " + to_display(item, indent + 2) + "\n";
      }
      return out + pad + "}";
    }
  }
  return {};
}

}  // namespace exitsim::bencode
