#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace himor {

// Process-wide worker cap (CLI --threads). 1 is the determinism reference;
// higher counts must match it bitwise, so workers only ever write to disjoint
// preallocated slots.
int& max_threads();

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int threads = std::clamp(max_threads(), 1, 256);
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = n * w / workers;
      const std::size_t hi = n * (w + 1) / workers;
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace himor
