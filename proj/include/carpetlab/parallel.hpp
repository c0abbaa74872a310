#pragma once
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace carpetlab {

// Worker count: CARPETLAB_THREADS if set (>=1), else hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("CARPETLAB_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return (unsigned)v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Static block partition of [0, n) across workers. Only embarrassingly
// parallel loops (independent trials, independent first-step DFS branches)
// go through here; everything else stays sequential and deterministic.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  unsigned workers = thread_count();
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  if (workers > n) workers = (unsigned)n;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace carpetlab
