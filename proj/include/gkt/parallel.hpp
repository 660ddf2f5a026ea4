#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace gkt {

/// Bounded worker count: GKT_THREADS if set, hardware concurrency otherwise.
std::int64_t env_thread_count();

/// Static block partition of [0, count) over at most `threads` workers.
/// Each index is processed exactly once; callers write results into
/// per-index slots so the outcome is independent of the thread count.
inline void parallel_for(std::int64_t count, std::int64_t threads,
                         const std::function<void(std::int64_t)>& body) {
  if (count <= 0) return;
  if (threads < 1) threads = 1;
  if (threads > count) threads = count;
  if (threads == 1) {
    for (std::int64_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  const std::int64_t chunk = (count + threads - 1) / threads;
  for (std::int64_t t = 0; t < threads; ++t) {
    const std::int64_t lo = t * chunk;
    const std::int64_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::int64_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace gkt
