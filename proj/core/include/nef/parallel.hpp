#pragma once

#include <cstdint>
#include <functional>

namespace nef {

// Number of worker threads the engine may use. Controlled by the NEF_THREADS
// environment variable: unset or 0 means "auto" (hardware concurrency),
// 1 forces serial execution. Read once and cached.
std::size_t thread_budget();

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each, on up
// to thread_budget() threads. Every index is handled by exactly one chunk, so
// results are bitwise independent of the thread count as long as fn writes
// disjoint outputs. Small ranges (below grain) run inline.
void parallel_for(std::int64_t n, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace nef
