#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mccle {

inline int resolve_workers(int workers) {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(begin, end, chunk_index) over fixed-size chunks of [0, n).
/// Chunk boundaries depend only on n and chunk_size, never on the worker
/// count, so callers that reduce per-chunk results in chunk order get
/// bit-identical output for any number of workers.
inline void parallel_chunks(
    std::size_t n, std::size_t chunk_size, int workers,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int n_workers =
      static_cast<int>(std::min<std::size_t>(resolve_workers(workers), n_chunks));
  if (n_workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      const std::size_t b = c * chunk_size;
      fn(b, std::min(n, b + chunk_size), c);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      const std::size_t b = c * chunk_size;
      try {
        fn(b, std::min(n, b + chunk_size), c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(n_workers) - 1);
  for (int i = 1; i < n_workers; ++i) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mccle
