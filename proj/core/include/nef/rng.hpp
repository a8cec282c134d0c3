#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace nef {

// Counter-based generator: a Weyl sequence fed through the SplitMix64
// finalizer. Stateless apart from (key, counter), so streams can be forked
// and replayed exactly. Every random draw in the engine flows through one
// of these, passed by reference from a single seed; there is no global RNG.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(seed) {}

  std::uint64_t next_u64() {
    counter_ += 1;
    return finalize(key_ + kWeyl * counter_);
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n), n > 0; fixed-point multiply keeps it branch-free
  std::uint64_t uniform_index(std::uint64_t n) {
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64());
    return static_cast<std::uint64_t>((wide * n) >> 64);
  }

  // standard Gumbel draw; u is clamped away from {0, 1} so the double log
  // stays finite
  double gumbel() {
    double u = std::clamp(uniform(), 1e-12, 1.0 - 1e-12);
    return -std::log(-std::log(u));
  }

  // independent substream addressed by tag; forking does not advance this
  // generator
  CounterRng fork(std::uint64_t tag) const {
    return CounterRng(finalize(key_ ^ finalize(tag + kWeyl)));
  }

  // deterministic Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace nef
