#pragma once

#include <cstddef>
#include <functional>

namespace spare {

// Worker cap: SPARE_LAB_THREADS if set, else hardware concurrency.
int max_workers();

// Runs fn(i) for i in [0, n). Tasks must be independent; each writes its own
// output slot, so results are identical for any worker count. Nested calls
// run serially on the calling worker to avoid oversubscription.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace spare
