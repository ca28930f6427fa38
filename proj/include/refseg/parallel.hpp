#pragma once

#include <cstddef>
#include <functional>

namespace refseg {

/// Worker budget: REFSEG_THREADS env var caps the count, 0 or unset means
/// hardware concurrency.
int thread_budget();

/// Splits [0, n) into contiguous chunks, one worker thread per chunk.
/// Workers must write disjoint outputs; results are then independent of the
/// worker count. threads_override < 0 uses thread_budget().
void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body,
                  int threads_override = -1);

}  // namespace refseg
