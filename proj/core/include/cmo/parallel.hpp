#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cmo {

/// 0 means one worker per hardware thread.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, count). Each index must write only its own output
/// slot; results are then independent of scheduling. The first exception thrown
/// by any index is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::ptrdiff_t count, int threads, Body&& body) {
    const int workers = static_cast<int>(
        std::min<std::ptrdiff_t>(resolve_threads(threads), std::max<std::ptrdiff_t>(count, 1)));
    if (workers <= 1) {
        for (std::ptrdiff_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::ptrdiff_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::ptrdiff_t i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = count;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(workers - 1));
        for (int w = 1; w < workers; ++w) pool.emplace_back(run);
        run();
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace cmo
