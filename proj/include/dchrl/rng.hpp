#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace dchrl {

// Deterministic 64-bit generator (SplitMix64) with labelled sub-streams.
// Forking a stream derives an independent generator from the parent state
// and a label hash, so adding draws to one stream never perturbs another.
// All bounded/real draws are implemented here (not via <random>) to keep
// sequences identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Integer in [0, bound). Multiply-shift mapping; bias is < bound / 2^64.
  uint64_t next_below(uint64_t bound) {
    if (bound == 0) return 0;
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * bound;
    return static_cast<uint64_t>(wide >> 64);
  }

  // Inclusive integer range.
  int next_int(int lo, int hi) {
    return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool next_bool(double p_true) { return next_double() < p_true; }

  // Independent labelled sub-stream. The parent consumes one draw.
  Rng fork(std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the label bytes
    for (char c : label) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return Rng(next_u64() ^ h);
  }

  Rng fork(std::string_view label, uint64_t index) {
    Rng r = fork(label);
    r.state_ ^= 0x9e3779b97f4a7c15ull * (index + 1);
    return r;
  }

  // Fisher-Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace dchrl
