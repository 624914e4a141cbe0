#ifndef RELAKERNEL_PARALLEL_HPP
#define RELAKERNEL_PARALLEL_HPP

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace relakernel {

// Worker cap: RELAKERNEL_THREADS wins over hardware_concurrency().
inline int max_threads()
{
    static const int cached = [] {
        if (const char* env = std::getenv("RELAKERNEL_THREADS")) {
            int n = std::atoi(env);
            if (n > 0) return n;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? int(hw) : 1;
    }();
    return cached;
}

// Static block split of [0,n).  Each worker writes disjoint indices, so the
// result is identical for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body)
{
    const std::size_t nw = std::min<std::size_t>(std::max(1, max_threads()), n);
    if (nw <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nw);
    const std::size_t chunk = (n + nw - 1) / nw;
    for (std::size_t w = 0; w < nw; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace relakernel

#endif
