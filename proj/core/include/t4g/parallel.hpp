#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace t4g {

/// Runs fn(i) for i in [0, count) on up to hardware_concurrency threads.
/// Each index must write only to its own output slot; callers merge results
/// by index, so the outcome never depends on scheduling. The first exception
/// (lowest index) is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min(hw, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::mutex guard;
  std::exception_ptr first_error;
  std::size_t first_index = count;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(guard);
          if (i < first_index) {
            first_index = i;
            first_error = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace t4g
