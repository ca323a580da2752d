#pragma once

#include <cstdint>
#include <functional>

namespace icnt {

/// Fixes the size of the shared compute worker pool. Must be called before the
/// pool is first used (any parallel op); throws std::logic_error afterwards.
/// n must be >= 1.
void set_worker_threads(int n);

/// Current configured pool size (the pool may not be instantiated yet).
int worker_threads();

/// Runs fn over [0, n) split into contiguous chunks, one per worker.
/// Chunk boundaries depend only on (n, pool size); every element is processed
/// by exactly one chunk in ascending order within the chunk, so outputs that
/// are written disjointly per index are identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

namespace detail {
/// Tears down the pool so tests can compare different thread counts in one
/// process. Not for production use: concurrent parallel_for calls must not be
/// in flight.
void reset_thread_pool_for_tests();
}  // namespace detail

}  // namespace icnt
