#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace cfine {

/// xoshiro256** with SplitMix64 seeding. The whole generator state is the
/// four words in `state()`, so it round-trips through checkpoints exactly.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);
  static Rng from_state(const State& s);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; consumes two draws, caches nothing.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  const State& state() const { return s_; }

 private:
  State s_{};
};

}  // namespace cfine
