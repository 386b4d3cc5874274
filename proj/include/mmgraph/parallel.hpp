#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace mmgraph {

namespace detail {
inline std::size_t& thread_cap_override() {
    static std::size_t cap = 0;
    return cap;
}
}  // namespace detail

/// Worker count for row-parallel kernels: hardware concurrency, capped by MMGRAPH_THREADS.
inline std::size_t thread_count() {
    if (detail::thread_cap_override() != 0) return detail::thread_cap_override();
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MMGRAPH_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
    }
    return n;
}

/// Overrides the worker count for the whole process (0 restores the environment default).
inline void set_thread_count(std::size_t n) { detail::thread_cap_override() = n; }

/// Splits [0, n) into contiguous chunks, one per worker. Each index is handled by exactly one
/// call so results do not depend on the worker count. `work` is the approximate total cost in
/// flops; small jobs stay on the calling thread.
template <class Fn>
void parallel_rows(std::size_t n, std::size_t work, Fn&& fn) {
    constexpr std::size_t kMinWorkPerThread = 1u << 16;
    std::size_t workers = std::min(thread_count(), n);
    workers = std::min(workers, std::max<std::size_t>(1, work / kMinWorkPerThread));
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(std::size_t{0}, std::min(n, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace mmgraph
