#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tvs {

// Fixed reduction block. Work is partitioned into blocks of this size and
// partial results are combined in block order, so results do not depend on
// the number of worker threads.
constexpr long kBlockSize = 256;

inline long num_blocks(long n) { return (n + kBlockSize - 1) / kBlockSize; }

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TVS_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs f(block_index, begin, end) over [0, n) split into kBlockSize blocks.
// Exceptions from workers are rethrown on the calling thread.
template <typename F>
void parallel_for_blocks(long n, int threads, F&& f) {
  const long nb = num_blocks(n);
  if (nb == 0) return;
  threads = std::min<long>(threads < 1 ? 1 : threads, nb);
  if (threads == 1) {
    for (long b = 0; b < nb; ++b) f(b, b * kBlockSize, std::min(n, (b + 1) * kBlockSize));
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    try {
      for (;;) {
        const long b = next.fetch_add(1, std::memory_order_relaxed);
        if (b >= nb) return;
        f(b, b * kBlockSize, std::min(n, (b + 1) * kBlockSize));
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace tvs
