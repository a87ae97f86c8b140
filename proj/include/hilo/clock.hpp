#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace hilo {

/// Virtual time. Integer microseconds keep the retrigger grid exact.
using Micros = std::chrono::microseconds;

inline constexpr Micros seconds(double s) {
    return Micros{static_cast<std::int64_t>(s * 1e6 + (s >= 0 ? 0.5 : -0.5))};
}

inline constexpr Micros millis(double ms) {
    return Micros{static_cast<std::int64_t>(ms * 1e3 + (ms >= 0 ? 0.5 : -0.5))};
}

inline constexpr double to_seconds(Micros t) { return static_cast<double>(t.count()) / 1e6; }

}  // namespace hilo
