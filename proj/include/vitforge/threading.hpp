#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace vitforge {

// Worker count: hardware concurrency capped by the VITFORGE_THREADS env var.
inline int max_threads() {
  static const int cached = [] {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("VITFORGE_THREADS")) {
      char* end = nullptr;
      const long cap = std::strtol(env, &end, 10);
      if (end != env && cap >= 1 && cap < 4096) {
        n = std::min(n, static_cast<int>(cap));
      }
    }
    return n;
  }();
  return cached;
}

namespace detail {
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

// Runs fn(i) for i in [0, n). Work is split into one contiguous chunk per
// worker; each index is executed by exactly one thread, so any result that
// is a pure function of i is identical to the serial run regardless of the
// thread count. Nested calls from inside a worker run serially.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn, std::int64_t min_per_thread = 1) {
  if (n <= 0) return;
  const int threads_wanted =
      detail::in_parallel_region()
          ? 1
          : static_cast<int>(std::min<std::int64_t>(
                max_threads(), std::max<std::int64_t>(1, n / std::max<std::int64_t>(1, min_per_thread))));
  if (threads_wanted <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }

  const std::int64_t chunk = (n + threads_wanted - 1) / threads_wanted;
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(threads_wanted));
  for (int t = 0; t < threads_wanted; ++t) {
    const std::int64_t begin = static_cast<std::int64_t>(t) * chunk;
    const std::int64_t end = std::min<std::int64_t>(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&, begin, end] {
      detail::in_parallel_region() = true;
      try {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
      detail::in_parallel_region() = false;
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace vitforge
