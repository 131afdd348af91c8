#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace exitsim::net {

/// IPv4 address held in host order.
class Ipv4 {
 public:
  constexpr Ipv4() = default;
  constexpr explicit Ipv4(std::uint32_t value) : value_(value) {}
  constexpr Ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value_((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) |
               (std::uint32_t{c} << 8) | std::uint32_t{d}) {}

  constexpr std::uint32_t value() const { return value_; }
  constexpr std::uint8_t octet(int i) const {
    return static_cast<std::uint8_t>(value_ >> (24 - 8 * i));
  }

  /// Strict dotted-quad: four decimal octets, no leading zeros, no spaces.
  static std::optional<Ipv4> parse(std::string_view text);
  std::string to_string() const;

  /// 4 raw bytes, network order.
  std::string to_bytes() const;
  static std::optional<Ipv4> from_bytes(std::string_view raw);

  friend constexpr auto operator<=>(Ipv4, Ipv4) = default;

 private:
  std::uint32_t value_ = 0;
};

/// A contiguous address block `base/prefix`.
struct Ipv4Range {
  Ipv4 base;
  int prefix = 32;

  constexpr std::uint32_t size() const {
    return prefix == 0 ? 0xFFFFFFFFu : (std::uint32_t{1} << (32 - prefix));
  }
  constexpr bool contains(Ipv4 ip) const {
    if (prefix == 0) return true;
    const std::uint32_t mask = ~((std::uint32_t{1} << (32 - prefix)) - 1);
    return (ip.value() & mask) == (base.value() & mask);
  }
  /// The `index`-th address of the block (0 is the network base).
  constexpr Ipv4 at(std::uint32_t index) const { return Ipv4(base.value() + index); }
};

struct Endpoint {
  Ipv4 ip;
  std::uint16_t port = 0;

  std::string to_string() const;
  friend constexpr auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

constexpr bool valid_port(std::int64_t port) { return port >= 1 && port <= 65535; }

}  // namespace exitsim::net

template <>
struct std::hash<exitsim::net::Ipv4> {
  std::size_t operator()(exitsim::net::Ipv4 ip) const noexcept {
    return std::hash<std::uint32_t>{}(ip.value());
  }
};

template <>
struct std::hash<exitsim::net::Endpoint> {
  std::size_t operator()(const exitsim::net::Endpoint& e) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{e.ip.value()} << 16) | e.port);
  }
};
