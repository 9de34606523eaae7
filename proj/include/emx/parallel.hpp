#pragma once
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "emx/tensorops.hpp"

namespace emx {

// Worker count: explicit argument > EIGENMAT_THREADS > hardware concurrency.
inline Index resolve_threads(Index requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("EIGENMAT_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<Index>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<Index>(hw) : 1;
}

// Runs fn(i) for i in [0, n). Tasks own disjoint output slots, so scheduling order
// cannot affect results; exceptions are rethrown (first one wins).
inline void parallel_for(Index n, const std::function<void(Index)>& fn, Index threads = 0) {
    if (n <= 0) return;
    threads = std::min<Index>(resolve_threads(threads), n);
    if (threads <= 1) {
        for (Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            Index i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (Index t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace emx
