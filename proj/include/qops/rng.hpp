#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace qops {

// Deterministic RNG helpers. All stochastic choices in the project go through
// these so that runs are bit-reproducible: uniform doubles are derived from
// raw mt19937_64 output instead of distribution objects, whose algorithms the
// standard leaves unspecified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Canonical double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t next_u64() { return gen_(); }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  // Fisher-Yates with explicit index draws.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 step, used to derive independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t s = mix_seed(base ^ mix_seed(a));
  s = mix_seed(s ^ mix_seed(b + 0x517cc1b727220a95ull));
  s = mix_seed(s ^ mix_seed(c + 0x2545f4914f6cdd1dull));
  return s;
}

}  // namespace qops
