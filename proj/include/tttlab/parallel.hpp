#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace tttlab {

// Worker cap: min(hardware threads, TTTLAB_THREADS when set).
inline int worker_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("TTTLAB_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Runs f(i) for i in [0, n) on a small thread group. Results must be written
// to pre-sized slots; any later reduction happens on the caller's thread in
// index order, so outcomes are scheduling-independent. Nested calls run
// serially on the worker.
inline void parallel_for(int n, const std::function<void(int)>& f) {
    const int workers = detail::in_parallel_region ? 1 : std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (int t = 0; t < workers; ++t) {
        threads.emplace_back([&, t]() {
            detail::in_parallel_region = true;
            try {
                for (int i = t; i < n; i += workers) f(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace tttlab
