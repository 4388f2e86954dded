#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace penadd {

/// Number of worker threads used when a call site passes threads = 0.
int default_threads();
void set_default_threads(int n);

/// Runs fn(i) for i in [0, count). Work is handed out in chunks through an
/// atomic cursor; fn must not touch shared mutable state across indices.
/// threads = 1 runs inline (used to avoid nested parallelism).
template <typename Fn>
void parallel_for(std::int64_t count, const Fn& fn, int threads = 0) {
  if (threads <= 0) threads = default_threads();
  if (threads <= 1 || count <= 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::int64_t chunk = std::max<std::int64_t>(1, count / (8 * threads));
  std::atomic<std::int64_t> cursor{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::int64_t begin = cursor.fetch_add(chunk);
      if (begin >= count || failed.load(std::memory_order_relaxed)) return;
      const std::int64_t end = std::min(begin + chunk, count);
      try {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace penadd
