#pragma once

#include <cstdint>

namespace rstack {

// splitmix64 (Steele/Lea/Flood), constants from the reference implementation.
// The stream is a pure function of the seed, so anything derived from it
// (datasets, parameter init, shuffles) reproduces bit-for-bit across
// platforms and languages.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53-bit resolution
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in {0, ..., n-1}; modulo bias is < 2^-59 for the small n used here
  uint32_t next_below(uint32_t n) { return static_cast<uint32_t>(next_u64() % n); }

  // uniform in (-k, k)
  double next_uniform(double k) { return (2.0 * next_double() - 1.0) * k; }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

// Stream derivation used for dataset splits and shard blocks: the block index
// is XORed into the seed before feeding splitmix64.
inline Rng derived_rng(uint64_t seed, uint64_t block) { return Rng(seed ^ block); }

}  // namespace rstack
