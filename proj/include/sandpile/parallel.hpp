#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sandpile {

/// Fixed partition of n work items into chunks. The layout depends only on
/// n, never on the thread count, so per-chunk RNG streams and the order in
/// which chunk results are merged are reproducible.
struct ChunkPlan {
  std::size_t items = 0;
  std::size_t chunk = 1;

  std::size_t count() const noexcept { return items == 0 ? 0 : (items + chunk - 1) / chunk; }
  std::size_t begin(std::size_t i) const noexcept { return i * chunk; }
  std::size_t end(std::size_t i) const noexcept { return std::min(items, (i + 1) * chunk); }
};

/// Roughly 32 chunks, each between 256 and 8192 items.
inline ChunkPlan plan_chunks(std::size_t items) {
  const std::size_t target = (items + 31) / 32;
  return ChunkPlan{items, std::clamp<std::size_t>(target, 256, 8192)};
}

/// 0 means all hardware threads.
inline unsigned resolve_threads(unsigned threads) {
  if (threads != 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Calls fn(i) for every i in [0, n) on up to `threads` workers. The first
/// exception (lowest index among those thrown) is rethrown after all
/// workers stop.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex err_mutex;
  std::exception_ptr err;
  std::size_t err_index = n;
  auto work = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
        stop.store(true, std::memory_order_relaxed);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace sandpile
