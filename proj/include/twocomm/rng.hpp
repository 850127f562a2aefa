#pragma once

#include <cstdint>
#include <random>

namespace twocomm {

// splitmix64; used both as a seed mixer and as the stream-key derivation
// primitive for ensembles.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct StreamKey {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;
  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

// Counter-based derivation: (master_seed, index) -> independent 128-bit key.
// Deterministic and order-free so replications can run in any schedule.
inline StreamKey derive_stream(std::uint64_t master_seed, std::uint64_t index) {
  std::uint64_t s = master_seed;
  std::uint64_t a = splitmix64(s);
  s ^= index * 0x9e3779b97f4a7c15ULL;
  StreamKey key;
  key.hi = splitmix64(s);
  s ^= a;
  key.lo = splitmix64(s);
  return key;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  std::seed_seq seq{splitmix64(s), splitmix64(s), splitmix64(s), splitmix64(s)};
  return Rng(seq);
}

inline Rng make_rng(const StreamKey& key) {
  std::seed_seq seq{key.hi, key.lo};
  return Rng(seq);
}

}  // namespace twocomm
