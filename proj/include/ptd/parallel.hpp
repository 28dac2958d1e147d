#pragma once

#include <cstddef>
#include <functional>

namespace ptd::parallel {

/// Forces single-threaded execution everywhere (bit-reproducible runs).
void set_deterministic(bool on);
bool deterministic();

/// Worker count: 1 in deterministic mode, otherwise hardware concurrency capped by PTD_THREADS.
int thread_count();

/// Splits [0, n) into at most thread_count() contiguous chunks and runs
/// `fn(begin, end, chunk_index)` for each, concurrently when more than one chunk.
/// Returns the number of chunks used; chunk indices are 0..chunks-1 in range order.
int for_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn);

/// Number of chunks for_chunks(n, ...) will use.
int chunk_count(std::size_t n);

}  // namespace ptd::parallel
