#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace recaudit {

/// splitmix64 step; used to whiten seeds and derive independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seeded random stream. All distributions are generated from raw mt19937_64
/// output with fixed arithmetic, so a seed produces the same sequence on any
/// standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t s = seed;
    seed_mix_ = splitmix64(s);
    engine_.seed(seed_mix_);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (one deviate per call, no cache).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // modulo bias is irrelevant at the n used here (attribute codes, shuffles)
    return n == 0 ? 0 : engine_() % n;
  }

  /// Index drawn from a cumulative distribution (last entry ~ 1.0).
  std::size_t categorical(const std::vector<double>& cdf) {
    const double u = uniform01();
    std::size_t lo = 0, hi = cdf.size();
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (u < cdf[mid - 1])
        hi = mid;
      else
        lo = mid;
    }
    return lo;
  }

  /// Independent child stream; deterministic in (parent seed, stream_id).
  Rng derive(std::uint64_t stream_id) const {
    std::uint64_t s = seed_mix_ ^ (0x632be59bd9b4e019ULL * (stream_id + 1));
    return Rng(splitmix64(s));
  }

  /// Construct with an explicit mix tag so derive() chains stay independent.
  static Rng from(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    std::uint64_t t = tag;
    Rng r(a ^ splitmix64(t));
    r.seed_mix_ = a ^ (t * 0x9e3779b97f4a7c15ULL);
    return r;
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_mix_ = 0;
};

template <typename T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace recaudit
