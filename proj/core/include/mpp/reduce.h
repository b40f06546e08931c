#ifndef MPP_REDUCE_H_
#define MPP_REDUCE_H_

#include <cstddef>
#include <vector>

namespace mpp {

// Pairwise tree reduction into items[0]: merge(a, b) folds b into a. The
// pairing depends only on items.size(), so the floating-point result is
// independent of how the items were produced (thread count, scheduling).
template <typename T, typename Merge>
void tree_reduce(std::vector<T>& items, Merge merge) {
  const std::size_t n = items.size();
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t i = 0; i + width < n; i += 2 * width) {
      merge(items[i], items[i + width]);
    }
  }
}

}  // namespace mpp

#endif  // MPP_REDUCE_H_
