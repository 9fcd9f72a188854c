#pragma once

// Deterministic replicate farm.
//
// Work is split into fixed-size chunks of replicate indices.  Worker threads
// claim chunks through an atomic counter, but every chunk writes into its own
// slot and the slots are merged in chunk order afterwards, so results are
// identical for any thread count.  Replicate-level randomness must come from
// streams keyed by the replicate index (see rng.hpp), never from shared
// generators.

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace brw {

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

inline constexpr std::uint64_t kDefaultChunk = 1024;

// body(begin, end, slot) fills the accumulator for replicates [begin, end);
// merge(total, slot) folds the slots together in increasing chunk order.
template <class Slot, class Body, class Merge>
Slot run_replicates(std::uint64_t n_replicates, unsigned threads, Body body, Merge merge,
                    std::uint64_t chunk_size = kDefaultChunk) {
  threads = resolve_threads(threads);
  if (n_replicates == 0) return Slot{};
  const std::uint64_t n_chunks = (n_replicates + chunk_size - 1) / chunk_size;
  std::vector<Slot> slots(n_chunks);

  auto work_chunk = [&](std::uint64_t c) {
    const std::uint64_t begin = c * chunk_size;
    const std::uint64_t end = std::min(begin + chunk_size, n_replicates);
    body(begin, end, slots[c]);
  };

  if (threads <= 1 || n_chunks == 1) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) work_chunk(c);
  } else {
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const std::uint64_t c = next.fetch_add(1);
        if (c >= n_chunks) return;
        try {
          work_chunk(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    const unsigned n_workers = static_cast<unsigned>(
        std::min<std::uint64_t>(threads, n_chunks));
    pool.reserve(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  Slot total{};
  for (std::uint64_t c = 0; c < n_chunks; ++c) merge(total, slots[c]);
  return total;
}

}  // namespace brw
