#pragma once

#include <cstddef>
#include <functional>

namespace uvfuse {

/// Worker cap: UVSPLAT_THREADS if set to a positive integer, otherwise
/// std::thread::hardware_concurrency() (at least 1).
int worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index
/// is visited exactly once; callers own determinism of any reduction.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace uvfuse
