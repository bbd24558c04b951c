#pragma once

// Fixed-order parallel map. Work item i always writes slot i, so results do
// not depend on scheduling. Thread count comes from NARA_LAB_THREADS (capped
// by the hardware) and defaults to the hardware concurrency.

#include <cstddef>
#include <functional>

namespace nara {

/// Threads to use; at least 1.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Exceptions from workers are rethrown (the one
/// from the lowest index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nara
