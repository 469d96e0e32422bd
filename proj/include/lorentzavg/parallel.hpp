#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lorentzavg {

// Runs body(i) for i in [0, n). Work is cut into fixed chunks independent of
// the thread count, and every index writes only its own output slot, so the
// result never depends on scheduling.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body)
{
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    constexpr std::size_t chunks = 64;
    const std::size_t per = (n + chunks - 1) / chunks;
    std::exception_ptr failure;
    std::mutex guard;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t c;
            {
                std::lock_guard lock(guard);
                if (next >= chunks || failure) return;
                c = next++;
            }
            const std::size_t lo = c * per, hi = std::min(n, lo + per);
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(guard);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace lorentzavg
