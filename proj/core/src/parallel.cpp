// Copyright (c) 2026 MSFIN contributors
// SPDX-License-Identifier: Apache-2.0
#include "msfin/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace msfin {
namespace {

int env_thread_cap() {
    const char* v = std::getenv("MSFIN_THREADS");
    if (!v) return 0;
    int n = std::atoi(v);
    return n > 0 ? n : 0;
}

std::atomic<int> g_override{0};

int resolve_threads() {
    int n = g_override.load(std::memory_order_relaxed);
    if (n <= 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
        static const int cap = env_thread_cap();
        if (cap > 0) n = std::min(n, cap);
    }
    return std::max(1, n);
}

// Lazily started pool. Workers pick up one (begin,end,fn) job per generation;
// the submitting thread participates as worker 0.
class Pool {
public:
    static Pool& instance() {
        static Pool p;
        return p;
    }

    void run(std::int64_t begin, std::int64_t end,
             const std::function<void(std::int64_t, std::int64_t)>& fn) {
        const int threads = resolve_threads();
        const std::int64_t total = end - begin;
        if (total <= 0) return;
        const int used = static_cast<int>(
            std::min<std::int64_t>(threads, total));
        if (used == 1) {
            fn(begin, end);
            return;
        }
        ensure_workers(used - 1);

        std::unique_lock lk(m_);
        job_ = &fn;
        job_begin_ = begin;
        job_end_ = end;
        job_parts_ = used;
        pending_ = used - 1;
        ++generation_;
        lk.unlock();
        cv_.notify_all();

        run_part(fn, begin, end, used, 0);

        std::unique_lock lk2(m_);
        done_cv_.wait(lk2, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    Pool() = default;
    ~Pool() {
        {
            std::lock_guard lk(m_);
            quit_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    static void run_part(
        const std::function<void(std::int64_t, std::int64_t)>& fn,
        std::int64_t begin, std::int64_t end, int parts, int index) {
        const std::int64_t total = end - begin;
        const std::int64_t chunk = (total + parts - 1) / parts;
        const std::int64_t lo = begin + chunk * index;
        const std::int64_t hi = std::min(end, lo + chunk);
        if (lo < hi) fn(lo, hi);
    }

    void ensure_workers(int n) {
        std::lock_guard lk(m_);
        while (static_cast<int>(workers_.size()) < n) {
            const int id = static_cast<int>(workers_.size()) + 1;
            workers_.emplace_back([this, id] { worker_loop(id); });
        }
    }

    void worker_loop(int id) {
        std::uint64_t seen = 0;
        for (;;) {
            std::unique_lock lk(m_);
            cv_.wait(lk, [&] { return quit_ || generation_ != seen; });
            seen = generation_;
            if (quit_) return;
            if (!job_ || id >= job_parts_) continue;
            auto fn = job_;
            auto begin = job_begin_;
            auto end = job_end_;
            auto parts = job_parts_;
            lk.unlock();

            run_part(*fn, begin, end, parts, id);

            lk.lock();
            if (--pending_ == 0) done_cv_.notify_one();
        }
    }

    std::mutex m_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> workers_;
    const std::function<void(std::int64_t, std::int64_t)>* job_ = nullptr;
    std::int64_t job_begin_ = 0, job_end_ = 0;
    int job_parts_ = 0;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool quit_ = false;
};

}  // namespace

int thread_count() { return resolve_threads(); }

void set_thread_count(int n) {
    g_override.store(n, std::memory_order_relaxed);
}

void parallel_for_chunked(
    std::int64_t begin, std::int64_t end,
    const std::function<void(std::int64_t, std::int64_t)>& fn) {
    Pool::instance().run(begin, end, fn);
}

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn) {
    parallel_for_chunked(begin, end,
                         [&fn](std::int64_t lo, std::int64_t hi) {
                             for (std::int64_t i = lo; i < hi; ++i) fn(i);
                         });
}

}  // namespace msfin
