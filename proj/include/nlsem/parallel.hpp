#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace nlsem {

/// Worker count: NLSEM_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t thread_count();

/// Runs body(begin, end) over [0, n) in fixed chunks of `chunk` items on
/// `threads` workers (0 = thread_count()). Chunk boundaries do not depend on
/// the worker count. The exception of the lowest failing chunk is rethrown.
void parallel_for(std::size_t n, std::size_t chunk,
                  const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t threads = 0);

/// Sum with fixed 256-element blocks combined pairwise; the result depends only
/// on the values and their order.
double stable_sum(std::span<const double> values);

} // namespace nlsem
