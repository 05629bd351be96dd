#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace flamesift {

/// Runs fn(task) for task in [0, tasks) on up to `workers` threads. Tasks are
/// handed out in strided order; the caller owns any reduction order.
inline void parallel_for(std::size_t tasks, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || tasks <= 1) {
        for (std::size_t t = 0; t < tasks; ++t) fn(t);
        return;
    }
    const std::size_t n = std::min(workers, tasks);
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (std::size_t w = 0; w < n; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t t = w; t < tasks; t += n) fn(t);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace flamesift
