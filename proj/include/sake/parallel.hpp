#pragma once

#include <cstddef>
#include <functional>

namespace sake {

// Worker count for evaluation passes: SAKE_THREADS if set, else the hardware
// concurrency. Always at least 1.
std::size_t evaluation_threads();

// Calls fn(i) for i in [0, n) on up to evaluation_threads() threads. Each index
// must write only its own output slot; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace sake
