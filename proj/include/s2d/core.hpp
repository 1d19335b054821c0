#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace s2d {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;
using u8 = std::uint8_t;

/// Extents of a dense 4-D array in (batch, channel, height, width) order.
struct Shape4 {
    i64 n = 0, c = 0, h = 0, w = 0;

    i64 numel() const { return n * c * h * w; }

    bool operator==(const Shape4& o) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace s2d
