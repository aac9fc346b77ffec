#pragma once

#include <cstddef>
#include <functional>

namespace mol {

// Runs fn(i) for i in [0, n). With workers <= 1 the loop is serial. Callers
// keep determinism by writing to per-index slots and reducing in order.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

// worker cap from the MOL_THREADS environment variable, default 1
int default_workers();

}  // namespace mol
