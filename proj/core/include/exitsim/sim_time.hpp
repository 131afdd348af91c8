#pragma once

#include <cstdint>

namespace exitsim {

/// Simulation time in integer milliseconds since scenario start.
using SimTime = std::int64_t;

inline constexpr SimTime kMillisPerSecond = 1000;

constexpr SimTime seconds(std::int64_t s) { return s * kMillisPerSecond; }

}  // namespace exitsim
