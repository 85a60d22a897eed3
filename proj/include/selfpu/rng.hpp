// rng.hpp -- deterministic keyed random streams.
//
// Every stochastic decision in the library draws from a generator derived
// from (seed, stream tag, epoch[, tick]). Streams are re-derivable at any
// epoch boundary, so resuming from a checkpoint replays the exact sequence
// without persisting engine state.
#pragma once

#include <cstdint>
#include <cmath>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace selfpu {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

// mt19937_64 has a sequence pinned by the standard; all value mappings below
// are explicit, so streams are bit-identical across platforms.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream, std::uint64_t a = 0,
      std::uint64_t b = 0) {
    std::uint64_t x = seed ^ fnv1a64(stream);
    std::uint64_t s0 = splitmix64(x);
    x ^= a * 0x9e3779b97f4a7c15ULL;
    std::uint64_t s1 = splitmix64(x);
    x ^= b * 0xff51afd7ed558ccdULL;
    std::uint64_t s2 = splitmix64(x);
    engine_.seed(s0 ^ (s1 << 1) ^ (s2 << 2));
  }

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1) with 53 random bits
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // standard normal via Box-Muller (pairs drawn, one cached)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  // uniform integer in [0, n), unbiased via rejection
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t mask = ~std::uint64_t{0} >> __builtin_clzll((n - 1) | 1);
    std::uint64_t v;
    do {
      v = engine_() & mask;
    } while (v >= n);
    return v;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// permutation of [0, n) as a pure function of the key
inline std::vector<std::int64_t> keyed_permutation(std::uint64_t seed,
                                                   std::string_view stream,
                                                   std::uint64_t epoch,
                                                   std::int64_t n,
                                                   std::uint64_t tick = 0) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), std::int64_t{0});
  Rng rng(seed, stream, epoch, tick);
  rng.shuffle(ids);
  return ids;
}

}  // namespace selfpu
