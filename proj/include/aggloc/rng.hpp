#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace aggloc {

// Deterministic random stream with hand-rolled distributions so that
// results are bit-identical across platforms and standard-library
// implementations (std::uniform_int_distribution et al. are not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed)) {}

  std::uint64_t next_u64() {
    // xorshift64* over a splitmix-initialized state.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // Uniform integer in [0, n), n >= 1. Rejection sampling keeps it unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Uniform double in (0, 1), never returning an exact endpoint.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Laplace(0, scale) via inverse CDF.
  double laplace(double scale) {
    const double u = uniform_open() - 0.5;
    const double sign = u < 0 ? -1.0 : 1.0;
    return -scale * sign * std::log(1.0 - 2.0 * std::fabs(u));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

  // k distinct indices drawn from [0, n) without replacement, in draw order.
  std::vector<std::uint32_t> sample_without_replacement(std::uint64_t n,
                                                        std::uint64_t k);

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t state_;
};

// Stable seed derivation for independent substreams. Each argument is folded
// through splitmix so streams for (seed, a) and (seed, b) are uncorrelated.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = Rng::splitmix(seed);
  for (std::uint64_t p : parts) {
    s = Rng::splitmix(s ^ Rng::splitmix(p));
  }
  return s;
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h = (h ^ static_cast<unsigned char>(c)) * 0x100000001B3ULL;
  }
  return h;
}

inline std::vector<std::uint32_t> Rng::sample_without_replacement(
    std::uint64_t n, std::uint64_t k) {
  // Floyd's algorithm; order then shuffled for uniform roster order.
  std::vector<std::uint32_t> out;
  out.reserve(k);
  for (std::uint64_t j = n - k; j < n; ++j) {
    const std::uint64_t t = uniform_int(j + 1);
    bool seen = false;
    for (std::uint32_t v : out) {
      if (v == t) {
        seen = true;
        break;
      }
    }
    out.push_back(static_cast<std::uint32_t>(seen ? j : t));
  }
  shuffle(out);
  return out;
}

}  // namespace aggloc
