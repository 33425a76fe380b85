#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace avgn {

// Deterministic PRNG (xoshiro256++ seeded through splitmix64). Hand-rolled so
// that dataset generation and weight init stay reproducible across standard
// library implementations; std::normal_distribution makes no such promise.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (int i = 0; i < 4; ++i) s_[i] = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  // standard normal via Box-Muller; the second value is discarded so the
  // stream does not depend on call parity
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Gumbel(0,1) sample
  double gumbel() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -std::log(-std::log(u));
  }

  // Fisher-Yates; std::shuffle is implementation-defined
  template <typename V>
  void shuffle(std::vector<V>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      const int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  // independent child stream; used to give each sample/epoch its own seed
  Rng fork(uint64_t tag) {
    uint64_t x = next_hash_ ^ (0x9e3779b97f4a7c15ull * (tag + 1));
    return Rng(x ^ s_[0]);
  }

 private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  uint64_t next_hash_ = 0x6a09e667f3bcc909ull;
};

// stable per-sample seed derivation: sample i of a dataset seeded with `base`
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  uint64_t x = base ^ (0x9e3779b97f4a7c15ull * (index + 0x51ull));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace avgn
