#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace netperm {

/// Worker-count default: --threads flag > NETPERM_THREADS env > hardware.
inline int default_thread_count() {
  if (const char* env = std::getenv("NETPERM_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Run fn(i) for i in [0, count). Each index is processed exactly once and
/// writes only to its own slot in caller-owned storage, so the result is
/// identical for any worker count. Exceptions are captured and rethrown on
/// the calling thread (first one wins).
template <typename Fn>
void parallel_for(std::uint64_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  unsigned n_workers = static_cast<unsigned>(threads);
  if (n_workers > count) n_workers = static_cast<unsigned>(count);

  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<std::uint64_t> next{0};
  const std::uint64_t chunk = std::max<std::uint64_t>(1, count / (8 * n_workers));

  for (unsigned w = 0; w < n_workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        std::uint64_t begin = next.fetch_add(chunk);
        if (begin >= count) return;
        std::uint64_t end = std::min(count, begin + chunk);
        try {
          for (std::uint64_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace netperm
