#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace equiplan {

// Runs fn(0..count-1) on up to `threads` workers. Work items must be
// independent; callers own any ordered reduction over the results, which
// keeps outputs bit-identical for every thread count.
inline void run_indexed(std::size_t count, std::size_t threads,
                        const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace equiplan
