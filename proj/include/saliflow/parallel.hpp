#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace saliflow {

// Runs fn(i) for i in [0, n) across hardware threads. Results must be
// written to caller-owned slots indexed by i, so the merge is deterministic
// regardless of scheduling. The first exception is rethrown on the caller.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned max_threads = 0) {
    if (n == 0) return;
    unsigned hw = max_threads ? max_threads : std::thread::hardware_concurrency();
    if (hw <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(hw, n));
    std::vector<std::thread> threads;
    std::exception_ptr error;
    std::mutex error_mutex;
    std::atomic<std::size_t> next{0};
    for (unsigned w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace saliflow
