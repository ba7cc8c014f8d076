#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace georefine {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives independent, reproducible seeds for named consumers from one root seed.
class SeedSplitter {
 public:
  explicit SeedSplitter(std::uint64_t root) : root_(root) {}

  std::uint64_t derive(std::string_view stream, std::uint64_t index = 0) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream name
    for (char c : stream) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(root_ ^ h) + index);
  }

  std::mt19937_64 engine(std::string_view stream, std::uint64_t index = 0) const {
    return std::mt19937_64(derive(stream, index));
  }

  std::uint64_t root() const noexcept { return root_; }

 private:
  std::uint64_t root_;
};

/// Distribution helpers with fixed formulas, so draws are identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline double gaussian(std::mt19937_64& rng) {
  // Box-Muller; the first uniform is kept away from zero.
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * (1.0 / 9007199254740993.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace georefine
