#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

#include "masscrf/tensor.hpp"

namespace masscrf {

// Worker count: hardware concurrency capped by MASSCRF_THREADS (>= 1).
inline int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* cap = std::getenv("MASSCRF_THREADS")) {
    const int c = std::atoi(cap);
    if (c >= 1 && c < n) n = c;
  }
  return n;
}

// Deterministic data-parallel loop: body(i) must write only to slot i of its
// output. Chunked statically so the split never depends on timing.
template <typename F>
void parallel_for(Index n, F&& body) {
  const int workers = std::min<Index>(worker_count(), n) > 0
                          ? static_cast<int>(std::min<Index>(worker_count(), n))
                          : 1;
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Index chunk = (n + workers - 1) / workers;
  for (int t = 0; t < workers; ++t) {
    const Index begin = t * chunk;
    const Index end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] {
      for (Index i = begin; i < end; ++i) body(i);
    });
  }
  for (std::thread& th : pool) th.join();
}

}  // namespace masscrf
