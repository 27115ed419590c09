// SPDX-License-Identifier: Apache-2.0
#include "pg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace pg {

namespace {
std::atomic<unsigned> g_threads{1};
}

void set_num_threads(unsigned n) { g_threads = std::max(1u, n); }

unsigned num_threads() { return g_threads; }

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)> &fn,
                  std::size_t min_chunk) {
  if (count == 0)
    return;
  const std::size_t workers = std::min<std::size_t>(
      g_threads, std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_chunk)));
  if (workers <= 1) {
    fn(0, count);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(count, b + chunk);
    if (b < e)
      pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(count, chunk));
}

} // namespace pg
