#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace metaoth {

// Worker count from METAOTH_THREADS, else 1.
inline int default_threads() {
  if (const char* env = std::getenv("METAOTH_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n). Chunk
// boundaries do not depend on the thread count, so callers that reduce
// per-chunk partials in chunk order get identical results for any `threads`.
template <typename Fn>
void for_each_chunk(std::uint64_t n, std::uint64_t chunk, int threads, Fn&& fn) {
  const std::uint64_t n_chunks = (n + chunk - 1) / chunk;
  const auto workers = static_cast<std::uint64_t>(std::max(1, threads));
  if (workers == 1 || n_chunks <= 1) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::uint64_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::uint64_t c = w; c < n_chunks; c += workers) fn(c, c * chunk, std::min(n, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace metaoth
