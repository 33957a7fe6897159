#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace ftc {

// splitmix64; used both as a seed mixer and as the state update of Rng.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives a child seed from a master seed and a list of stream ids. Distinct
// id tuples map to distinct seeds with overwhelming probability; the sweep
// harness additionally checks for collisions over its full grid.
inline uint64_t derive_seed(uint64_t master, std::initializer_list<uint64_t> ids) {
  uint64_t s = master ^ 0x6a09e667f3bcc909ull;
  for (uint64_t id : ids) {
    s ^= splitmix64(s) + 0x9e3779b97f4a7c15ull * (id + 1);
    (void)splitmix64(s);
  }
  return splitmix64(s);
}

// Deterministic PRNG with explicitly implemented distributions. The standard
// library distributions are implementation-defined, so they are avoided for
// anything that must reproduce bit-exactly from a seed.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {
    // decorrelate trivially related seeds
    (void)splitmix64(state_);
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // standard normal via Box-Muller; one cached value
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    u1 = u1 > 0 ? u1 : 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace ftc
