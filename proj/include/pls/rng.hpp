#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace pls::rng {

// SplitMix64; used to expand seeds and to derive substream roots.
struct SplitMix64 {
  std::uint64_t state = 0;

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
};

// xoshiro256** (Blackman & Vigna). Self-contained so that every stream is
// reproducible across platforms and standard library versions; std::
// distributions are implementation-defined and must not be used here.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto& word : state_) word = sm.next();
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, bound); bound must be positive.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Fisher-Yates; deterministic for a given stream state.
  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    using std::swap;
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      swap(first[i - 1], first[next_below(i)]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_;
};

// Seed of a named substream. Streams of distinct (root, stage, index)
// triples are independent; the same triple always yields the same stream.
inline std::uint64_t derive(std::uint64_t root, std::string_view stage,
                            std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stage name
  for (const char ch : stage) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  SplitMix64 sm{root};
  sm.state = sm.next() ^ h;
  sm.state = sm.next() ^ index;
  return sm.next();
}

}  // namespace pls::rng
