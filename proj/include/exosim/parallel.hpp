#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace exosim::par {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

struct ChunkRange {
  std::size_t begin;
  std::size_t end;
  std::size_t index;
};

inline std::vector<ChunkRange> make_chunks(std::size_t n, std::size_t chunk_size) {
  std::vector<ChunkRange> chunks;
  if (chunk_size == 0) chunk_size = 1;
  for (std::size_t b = 0, idx = 0; b < n; b += chunk_size, ++idx) {
    chunks.push_back({b, std::min(b + chunk_size, n), idx});
  }
  return chunks;
}

// Runs body over fixed-size chunks of [0, n). Chunk boundaries depend only on
// n and chunk_size, never on the thread count, so any reduction done
// per-chunk and combined in chunk order is bit-identical for threads = 1 and
// threads = k. threads <= 1 runs serially on the calling thread.
template <typename Body>
void for_chunks(std::size_t n, std::size_t chunk_size, int threads, Body&& body) {
  auto chunks = make_chunks(n, chunk_size);
  if (threads <= 1) {
    for (const auto& c : chunks) body(c);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long long i = 0; i < static_cast<long long>(chunks.size()); ++i) {
    body(chunks[static_cast<std::size_t>(i)]);
  }
#else
  for (const auto& c : chunks) body(c);
#endif
}

}  // namespace exosim::par
