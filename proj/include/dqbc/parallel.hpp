#pragma once

#include <atomic>
#include <thread>
#include <vector>

namespace dqbc {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

inline void set_num_threads(int n) { detail::thread_setting() = n < 1 ? 1 : n; }
inline int num_threads() { return detail::thread_setting().load(); }

// Runs fn(i) for i in [begin, end) across contiguous chunks. Every index is
// computed by exactly one thread and each fn(i) is self-contained, so results
// are identical for any thread count.
template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  int workers = num_threads();
  if (workers > n) workers = n;
  if (workers <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers) - 1);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    const int lo = begin + w * chunk;
    const int hi = lo + chunk < end ? lo + chunk : end;
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  const int hi0 = begin + chunk < end ? begin + chunk : end;
  for (int i = begin; i < hi0; ++i) fn(i);
  for (auto& t : pool) t.join();
}

}  // namespace dqbc
