#pragma once

#include <cstddef>
#include <functional>

namespace sdefim {

/// Worker count: SDE_FIM_THREADS if set and positive, else hardware concurrency.
unsigned worker_count();

/// Runs fn(i) for i in [0, count) over up to worker_count() threads.
/// Work is split into contiguous chunks; callers write results into
/// per-index slots so the outcome never depends on scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace sdefim
