#pragma once

// Counter-based random streams. A stream is (key, counter); draw i of stream k
// is a pure function of (k, i), so parallel consumers keyed by purpose and
// index can never perturb each other's values. Platform-independent by
// construction (no std distributions).

#include <cmath>
#include <cstdint>
#include <string_view>

namespace nodnet {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class RngStream {
 public:
  RngStream() : key_(0) {}
  explicit RngStream(std::uint64_t seed) : key_(detail::splitmix64(seed ^ 0x8f1b5c41d2e09a67ULL)) {}

  // Child stream; independent of the parent's counter position.
  RngStream child(std::string_view tag) const {
    RngStream s;
    s.key_ = detail::splitmix64(key_ ^ fnv1a64(tag));
    return s;
  }
  RngStream child(std::uint64_t index) const {
    RngStream s;
    s.key_ = detail::splitmix64(key_ ^ detail::splitmix64(index ^ 0x6a5d39eae116586dULL));
    return s;
  }

  std::uint64_t next_u64() { return detail::splitmix64(key_ ^ detail::splitmix64(counter_++)); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n); rejection sampling.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller; consumes two draws per value.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // u1 == 0 would blow up the log
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates with our stream; std::shuffle is implementation-defined.
template <typename Vec>
void shuffle(Vec& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace nodnet
