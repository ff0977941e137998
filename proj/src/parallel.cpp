#include "g2coflow/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace g2cf {

namespace {
int g_workers = 1;
}

int worker_count() { return g_workers; }

void set_worker_count(int n) { g_workers = n < 1 ? 1 : n; }

int64_t chunk_count(int64_t n, int64_t chunk_size) {
    if (n <= 0) return 0;
    return (n + chunk_size - 1) / chunk_size;
}

void parallel_chunks(int64_t n, int64_t chunk_size,
                     const std::function<void(int, int64_t, int64_t)>& fn) {
    parallel_chunks_capped(n, chunk_size, g_workers, fn);
}

void parallel_chunks_capped(int64_t n, int64_t chunk_size, int max_workers,
                            const std::function<void(int, int64_t, int64_t)>& fn) {
    int64_t chunks = chunk_count(n, chunk_size);
    if (chunks == 0) return;
    int threads = g_workers < max_workers ? g_workers : max_workers;
    if (threads > chunks) threads = static_cast<int>(chunks);
    if (threads <= 1) {
        for (int64_t c = 0; c < chunks; ++c) {
            int64_t b = c * chunk_size;
            int64_t e = b + chunk_size < n ? b + chunk_size : n;
            fn(static_cast<int>(c), b, e);
        }
        return;
    }
    std::atomic<int64_t> next{0};
    auto work = [&]() {
        for (;;) {
            int64_t c = next.fetch_add(1);
            if (c >= chunks) return;
            int64_t b = c * chunk_size;
            int64_t e = b + chunk_size < n ? b + chunk_size : n;
            fn(static_cast<int>(c), b, e);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

}  // namespace g2cf
