#pragma once

#include <cstddef>
#include <functional>

namespace fnascent {

/// Worker count from FNASCENT_THREADS (default 1).
int thread_count();

/// Runs body(i) for i in [0, n) over contiguous chunks. Each index is handled
/// by exactly one worker, so results written per index do not depend on the
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace fnascent
