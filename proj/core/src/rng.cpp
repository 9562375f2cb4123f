// Copyright (c) 2026 MSFIN contributors
// SPDX-License-Identifier: Apache-2.0
#include "msfin/rng.hpp"

#include <cstdio>
#include <cstring>

#include "msfin/common.hpp"

namespace msfin {

std::string Rng::save_state() const {
    char buf[160];
    std::uint64_t gbits;
    std::memcpy(&gbits, &gauss_, sizeof gbits);
    std::snprintf(buf, sizeof buf, "%016llx %016llx %016llx %016llx %d %016llx",
                  static_cast<unsigned long long>(state_[0]),
                  static_cast<unsigned long long>(state_[1]),
                  static_cast<unsigned long long>(state_[2]),
                  static_cast<unsigned long long>(state_[3]),
                  have_gauss_ ? 1 : 0,
                  static_cast<unsigned long long>(gbits));
    return buf;
}

void Rng::load_state(const std::string& s) {
    unsigned long long w0, w1, w2, w3, gbits;
    int flag;
    if (std::sscanf(s.c_str(), "%llx %llx %llx %llx %d %llx",
                    &w0, &w1, &w2, &w3, &flag, &gbits) != 6) {
        throw RuntimeError("malformed rng state: '" + s + "'");
    }
    state_ = {w0, w1, w2, w3};
    have_gauss_ = flag != 0;
    std::uint64_t g = gbits;
    std::memcpy(&gauss_, &g, sizeof gauss_);
}

}  // namespace msfin
