#pragma once

#include <cstddef>
#include <functional>

namespace dd {

// Worker count: min(DD_THREADS, hardware_concurrency), at least 1.
unsigned max_threads();

// Runs fn(begin, end) over a static split of [0, n) across the worker
// pool. Each index lands in exactly one range and every range is summed
// by one worker in index order, so results do not depend on the worker
// count. Blocks until all ranges finish.
void parallel_ranges(std::size_t n,
                     const std::function<void(std::size_t begin, std::size_t end)>& fn);

// Convenience wrapper: fn(i) for i in [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dd
