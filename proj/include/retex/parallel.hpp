// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace retex {

namespace detail {
inline int& max_threads_ref() {
  static int n = 1;
  return n;
}
}  // namespace detail

inline void set_max_threads(int n) { detail::max_threads_ref() = n < 1 ? 1 : n; }
inline int max_threads() { return detail::max_threads_ref(); }

/// Runs fn(chunk_index, begin, end) over [0, count) split into fixed-size
/// chunks. Chunk boundaries depend only on chunk_size, never on the thread
/// count, so any chunk-indexed output is reproducible bit for bit whether the
/// chunks run on one thread or many. fn must not touch state shared across
/// chunks except through its own chunk's output slot.
template <typename Fn>
void parallel_chunks(int64_t count, int64_t chunk_size, Fn&& fn) {
  if (count <= 0) return;
  if (chunk_size <= 0) chunk_size = count;
  const int64_t n_chunks = (count + chunk_size - 1) / chunk_size;
  auto run_chunk = [&](int64_t ci) {
    const int64_t begin = ci * chunk_size;
    const int64_t end = begin + chunk_size < count ? begin + chunk_size : count;
    fn(ci, begin, end);
  };

  const int n_threads =
      static_cast<int>(n_chunks < max_threads() ? n_chunks : max_threads());
  if (n_threads <= 1) {
    for (int64_t ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    return;
  }

  std::atomic<int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int64_t ci = next.fetch_add(1, std::memory_order_relaxed);
      if (ci >= n_chunks || failed.load(std::memory_order_relaxed)) return;
      try {
        run_chunk(ci);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace retex
