#pragma once

#include <cstddef>
#include <functional>

namespace geobvp {

/// Worker count: GEOBVP_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
int thread_count();

/// Runs fn(0) ... fn(count - 1) on up to thread_count() threads. Work is
/// handed out by index; callers write results into per-index slots so the
/// merge order never depends on scheduling. The first exception (lowest
/// index) is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace geobvp
