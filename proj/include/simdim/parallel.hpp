#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace simdim {

inline int effective_threads(int requested) {
  if (const char* env = std::getenv("SIMDIM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) requested = n;
    } catch (...) {
    }
  }
  return std::max(1, requested);
}

// Runs f(i) for i in [0, n). Work is split into contiguous blocks; callers
// must write only to slots owned by index i. The result is identical for any
// thread count because no cross-block state is shared.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  threads = std::max(1, threads);
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  const std::size_t block = (n + nthreads - 1) / nthreads;
  for (std::size_t t = 0; t < nthreads; ++t) {
    const std::size_t lo = t * block;
    const std::size_t hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f]() {
      for (std::size_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace simdim
