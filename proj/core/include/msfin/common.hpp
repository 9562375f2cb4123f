// Copyright (c) 2026 MSFIN contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace msfin {

/// Extents of a dense 4-D tensor, (batch, channel, height, width).
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    constexpr std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    constexpr bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Contract violation in an operator or module (bad shapes, divisibility, ...).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Runtime failure (I/O, corrupt file, non-finite loss, ...).
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace msfin
