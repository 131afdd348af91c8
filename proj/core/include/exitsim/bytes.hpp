#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace exitsim {

// Raw bytes are carried in std::string, as most BitTorrent code bases do.
using Bytes = std::string;
using BytesView = std::string_view;

std::string to_hex(BytesView raw);
/// Accepts upper or lower case; whitespace between digit pairs is skipped.
std::optional<Bytes> from_hex(std::string_view hex);

/// 64-bit FNV-1a. Used for ledger digests, not for anything adversarial.
std::uint64_t fnv1a64(BytesView data, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string digest_hex(BytesView data);

/// Fixed-width opaque identifier (info-hashes, peer ids, node ids).
template <std::size_t N, class Tag>
class FixedBytes {
 public:
  static constexpr std::size_t size = N;

  constexpr FixedBytes() = default;
  constexpr explicit FixedBytes(const std::array<std::uint8_t, N>& b) : bytes_(b) {}

  static std::optional<FixedBytes> from_bytes(BytesView raw) {
    if (raw.size() != N) return std::nullopt;
    FixedBytes out;
    for (std::size_t i = 0; i < N; ++i) out.bytes_[i] = static_cast<std::uint8_t>(raw[i]);
    return out;
  }
  static std::optional<FixedBytes> from_hex(std::string_view hex) {
    auto raw = exitsim::from_hex(hex);
    if (!raw) return std::nullopt;
    return from_bytes(*raw);
  }

  Bytes to_bytes() const { return Bytes(reinterpret_cast<const char*>(bytes_.data()), N); }
  std::string to_hex() const { return exitsim::to_hex(to_bytes()); }

  const std::array<std::uint8_t, N>& array() const { return bytes_; }
  std::array<std::uint8_t, N>& array() { return bytes_; }
  std::uint8_t operator[](std::size_t i) const { return bytes_[i]; }

  friend constexpr auto operator<=>(const FixedBytes&, const FixedBytes&) = default;

 private:
  std::array<std::uint8_t, N> bytes_{};
};

}  // namespace exitsim
