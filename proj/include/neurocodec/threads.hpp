#ifndef NEUROCODEC_THREADS_HPP
#define NEUROCODEC_THREADS_HPP

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace neurocodec {

// Runs fn(i) for i in [0, n), split over contiguous chunks. Each index runs
// exactly once; callers that need determinism must write results into
// per-index slots and reduce in index order afterwards.
inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const int64_t lo = n * w / workers;
    const int64_t hi = n * (w + 1) / workers;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace neurocodec

#endif
