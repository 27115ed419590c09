// SPDX-License-Identifier: Apache-2.0
/**
 * @file  parallel.hpp
 * @brief Static-partition parallel loop used by the kernels. Every output
 *        element is owned by exactly one worker, so results do not depend on
 *        the thread count.
 */
#ifndef PG_PARALLEL_HPP
#define PG_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace pg {

/// Process-wide worker count for kernels. Defaults to 1.
void set_num_threads(unsigned n);
unsigned num_threads();

/// Calls fn(begin, end) over disjoint contiguous chunks of [0, count).
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)> &fn,
                  std::size_t min_chunk = 1);

} // namespace pg

#endif // PG_PARALLEL_HPP
