#pragma once

#include <cstddef>
#include <functional>

namespace prefiner {

/// Worker count for data-parallel loops. 1 (the default) runs everything
/// inline on the calling thread.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Splits [0, count) into contiguous chunks whose boundaries are multiples of
/// `align` and runs body(lo, hi) on each. Callers only use it for loops whose
/// iterations write disjoint outputs, so results do not depend on the thread
/// count.
void parallel_for(std::size_t count, std::size_t align, std::size_t work_per_item,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace prefiner
