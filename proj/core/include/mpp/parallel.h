#ifndef MPP_PARALLEL_H_
#define MPP_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace mpp {

// Process-wide worker count used by parallel_for. Defaults to 1.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Work is handed out dynamically, so callers must
// write results into per-index slots and reduce them afterwards in index
// order; that keeps every result independent of the thread count. Calls made
// from inside a worker run serially. The first exception thrown by any task is
// rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mpp

#endif  // MPP_PARALLEL_H_
