// Copyright (c) 2026 MSFIN contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace msfin {

/// Number of worker threads the kernels may use. Defaults to the hardware
/// concurrency, capped by the MSFIN_THREADS environment variable (read once).
int thread_count();

/// Overrides the thread count for the current process (0 = auto).
void set_thread_count(int n);

/// Runs fn(i) for i in [begin, end). Work is split into contiguous chunks,
/// one chunk per worker; every index is handled by exactly one thread, so
/// results are bitwise independent of the thread count as long as fn writes
/// only to locations owned by its index.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

/// Chunked variant: fn(chunk_begin, chunk_end). Cheaper when per-index
/// dispatch overhead matters.
void parallel_for_chunked(
    std::int64_t begin, std::int64_t end,
    const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace msfin
