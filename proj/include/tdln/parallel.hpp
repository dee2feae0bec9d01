// Deterministic fan-out: work is cut into fixed-size chunks and the chunk
// results are folded strictly in chunk order, so the reduction sequence is
// identical for every thread count.
#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <future>
#include <thread>

namespace tdln {

inline unsigned resolve_thread_count(unsigned requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// map(begin, end) -> Result computed per chunk, possibly concurrently;
// reduce(Result&&) invoked sequentially in ascending chunk order.
template <typename Result, typename MapFn, typename ReduceFn>
void ordered_chunked_reduce(std::size_t n, std::size_t chunk_size, unsigned threads,
                            MapFn&& map, ReduceFn&& reduce) {
    if (n == 0) return;
    chunk_size = std::max<std::size_t>(1, chunk_size);
    threads = resolve_thread_count(threads);
    if (threads <= 1) {
        for (std::size_t b = 0; b < n; b += chunk_size)
            reduce(map(b, std::min(b + chunk_size, n)));
        return;
    }
    std::deque<std::future<Result>> inflight;
    for (std::size_t b = 0; b < n; b += chunk_size) {
        const std::size_t e = std::min(b + chunk_size, n);
        inflight.push_back(
            std::async(std::launch::async, [&map, b, e] { return map(b, e); }));
        if (inflight.size() >= threads) {
            reduce(inflight.front().get());
            inflight.pop_front();
        }
    }
    while (!inflight.empty()) {
        reduce(inflight.front().get());
        inflight.pop_front();
    }
}

}  // namespace tdln
