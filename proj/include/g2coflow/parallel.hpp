/// @file parallel.hpp
/// @brief Worker pool with deterministic chunking.
///
/// Work is split into fixed-size chunks that depend only on the problem size,
/// never on the worker count; chunk outputs are disjoint and reductions are
/// combined in chunk order by the caller, so results are bit-identical for
/// any number of workers.

#pragma once

#include <cstdint>
#include <functional>

namespace g2cf {

int worker_count();
void set_worker_count(int n);

/// Runs fn(chunk_index, begin, end) over [0, n) split into chunks of
/// `chunk_size` items (the final chunk may be short).
void parallel_chunks(int64_t n, int64_t chunk_size,
                     const std::function<void(int, int64_t, int64_t)>& fn);

/// Same, but with at most `max_workers` threads (for loops whose per-worker
/// scratch is large).  Chunking is unchanged, so results are identical.
void parallel_chunks_capped(int64_t n, int64_t chunk_size, int max_workers,
                            const std::function<void(int, int64_t, int64_t)>& fn);

/// Number of chunks parallel_chunks will use (for sizing partial buffers).
int64_t chunk_count(int64_t n, int64_t chunk_size);

}  // namespace g2cf
