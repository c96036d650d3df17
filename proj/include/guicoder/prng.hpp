#pragma once

#include <cstdint>

namespace guicoder {

// SplitMix64. Every stream in the project (program generation, weight
// init, shuffling, dropout) draws from this so that goldens are identical
// across platforms and runs.
struct Prng {
  std::uint64_t state = 0;

  std::uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform integer in [lo, hi], inclusive
  std::uint64_t next_range(std::uint64_t lo, std::uint64_t hi) {
    return lo + next_u64() % (hi - lo + 1);
  }

  // uniform in [0, 1), 53 random bits
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }
};

inline std::uint64_t mix_u64(std::uint64_t v) {
  Prng p{v};
  return p.next_u64();
}

// Child stream keyed by up to three indices. Runs each key through the
// mixer so nearby (salt, a, b) triples give unrelated sequences.
inline Prng derive_stream(std::uint64_t seed, std::uint64_t salt,
                          std::uint64_t a = 0, std::uint64_t b = 0) {
  return Prng{seed ^ mix_u64(salt ^ mix_u64(a ^ mix_u64(b)))};
}

}  // namespace guicoder
