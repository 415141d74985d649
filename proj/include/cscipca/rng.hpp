#pragma once

// Seeded random streams with platform-independent draws.
//
// Distribution sampling goes through explicit bit manipulation and
// Box-Muller instead of <random> distributions, whose output sequences
// differ between standard library implementations. Replication runs
// derive independent streams from (seed, index) so results do not
// depend on scheduling or thread count.

#include <cstdint>
#include <cmath>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace cscipca {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Independent stream for replication `idx` of a run seeded with `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t idx) {
    return Rng(splitmix64(seed) ^ splitmix64(idx * 0x9e3779b97f4a7c15ULL + 0x5851f42d4c957f2dULL));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; stateless across calls.
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Uniform integer on [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

/// Run fn(i) for i in [0, n) across at most `threads` workers. Static block
/// partition; each index is visited exactly once, so writes to per-index
/// slots need no synchronization and results match any thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace cscipca
