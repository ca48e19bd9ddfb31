#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace catlab {

// Runs fn(chunk_index, begin, end) over [0,n) split into fixed-size chunks.
// The chunk layout depends only on (n, chunk_size), never on the thread
// count, so per-chunk results merged in chunk order are bit-identical for
// any --threads value. The first exception thrown by fn is rethrown here.
inline void parallel_chunks(std::size_t n, std::size_t chunk_size, int threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
    if (threads <= 1 || n_chunks == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr eptr;
    std::mutex emu;
    auto worker = [&] {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= n_chunks || failed.load()) break;
            try {
                fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
            } catch (...) {
                std::lock_guard<std::mutex> lk(emu);
                if (!eptr) eptr = std::current_exception();
                failed.store(true);
                break;
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t np = std::min<std::size_t>(static_cast<std::size_t>(threads), n_chunks);
    pool.reserve(np);
    for (std::size_t t = 0; t < np; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (eptr) std::rethrow_exception(eptr);
}

}
