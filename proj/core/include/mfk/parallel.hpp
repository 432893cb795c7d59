#pragma once

#include <cstddef>
#include <functional>

namespace mfk {

// worker count: MFK_THREADS if set (clamped to >=1), else hardware concurrency
int thread_budget();

// Runs fn(i) for i in [0, n). Work is split into contiguous index ranges, one
// per worker; callers must only write to per-index slots so results never
// depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mfk
