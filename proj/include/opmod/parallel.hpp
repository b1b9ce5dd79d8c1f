#pragma once

#include "opmod/core.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace opmod {

/// Default worker count: OPMOD_THREADS if set and positive, else 1.
inline Index default_threads() {
    if (const char* env = std::getenv("OPMOD_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<Index>(v);
    }
    return 1;
}

inline Index resolve_threads(Index requested) { return requested > 0 ? requested : default_threads(); }

/// Runs f(i) for i in [0, n) on up to `threads` workers with a static interleaved schedule.
/// Callers write results into slot i, so output never depends on the schedule.
/// The first exception (lowest index) is rethrown after all workers join.
template <class F>
void parallel_for(Index n, Index threads, F&& f) {
    threads = std::max<Index>(1, std::min(resolve_threads(threads), n));
    if (threads <= 1) {
        for (Index i = 0; i < n; ++i) f(i);
        return;
    }
    std::mutex mu;
    Index err_index = n;
    std::exception_ptr err;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (Index w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (Index i = w; i < n; i += threads) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (i < err_index) {
                        err_index = i;
                        err = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace opmod
