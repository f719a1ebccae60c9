#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dfctbn {

/// SplitMix64 finalizer; used to derive independent sub-stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a, so named streams do not depend on std::hash.
constexpr std::uint64_t stream_tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  return splitmix64(splitmix64(seed) ^ splitmix64(key + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return derive_seed(seed, stream_tag(name));
}

/// Reproducible generator. Distributions are implemented here rather than
/// through <random> adaptors, whose output is not portable across libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  Rng substream(std::uint64_t key) const { return Rng(derive_seed(seed_, key)); }
  Rng substream(std::string_view name) const { return Rng(derive_seed(seed_, name)); }

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Exponential with the given rate; rate must be positive.
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  double normal() {
    // Box-Muller without caching keeps the stream position a pure function of the call count.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  bool bernoulli(double p) { return uniform() < p; }
  /// Poisson count as the number of unit-rate arrivals in [0, mean]; O(mean).
  std::uint64_t poisson(double mean) {
    std::uint64_t n = 0;
    for (double t = exponential(1.0); t <= mean; t += exponential(1.0)) ++n;
    return n;
  }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace dfctbn
