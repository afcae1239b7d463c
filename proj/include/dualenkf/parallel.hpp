#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace dualenkf {

/// Worker count from the DUALENKF_THREADS environment variable, or 1.
int default_threads();

/// Calls fn(begin, end) on contiguous chunks of [0, n). Chunks are disjoint
/// and each index is processed exactly once, so any fn that only writes to
/// its own indices gives the same result for every thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

}  // namespace dualenkf
