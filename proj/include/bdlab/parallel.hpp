#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace bdlab {

// Runs fn(i) for i in [0, n) on up to `threads` workers with a static
// contiguous partition. fn must only write to slots owned by i, which keeps
// results independent of the thread count. The first exception is rethrown.
template <typename Fn> void parallel_for(std::size_t n, unsigned threads, Fn &&fn)
{
  std::size_t const workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) { fn(i); }
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread>        pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      std::size_t const lo = n * w / workers;
      std::size_t const hi = n * (w + 1) / workers;
      try {
        for (std::size_t i = lo; i < hi; ++i) { fn(i); }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto &t : pool) { t.join(); }
  for (auto &e : errors) {
    if (e) { std::rethrow_exception(e); }
  }
}

// Derives an independent 64-bit stream seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

} // namespace bdlab
