#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace latmap {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return int(std::clamp<unsigned>(hw, 1u, 16u));
}

// Splits [0, total) into one contiguous chunk per thread and joins. Chunk
// boundaries depend only on (total, threads), so reductions done in thread
// order are deterministic.
inline void parallel_chunks(int64_t total, int threads,
                            const std::function<void(int64_t, int64_t, int)>& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || total < 2 * threads) {
    fn(0, total, 0);
    return;
  }
  std::vector<std::thread> pool;
  int64_t chunk = (total + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int64_t begin = t * chunk;
    int64_t end = std::min(total, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([=, &fn] { fn(begin, end, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace latmap
