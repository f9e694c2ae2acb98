#ifndef DIGITNET_PARALLEL_HPP
#define DIGITNET_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace digitnet {

// Number of worker threads the process-wide pool runs with.
// DIGITNET_THREADS in the environment overrides hardware_concurrency.
unsigned worker_count();

// Runs body(begin, end) over a partition of [0, n). Every index is handled
// exactly once; partitioning may vary with thread count, so callers must
// only use this where per-index results are independent of each other.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

// Runs fn(chunk) for chunk in [0, chunks). The chunk structure is fixed by
// the caller, so chunk-wise reductions stay bitwise stable across thread
// counts.
void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& fn);

// Fixed chunk count used for gradient accumulation across a batch.
inline constexpr std::size_t kGradChunks = 8;

}  // namespace digitnet

#endif
