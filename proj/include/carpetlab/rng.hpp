#pragma once
#include <cmath>
#include <cstdint>
#include <string_view>

namespace carpetlab {

// splitmix64 finalizer: the one mixing primitive behind both the counter RNG
// (box marks) and the sequential stream. Keeping it in one place is what makes
// "same seed, same output" hold across every module.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Key derivation contract (documented in the README): every run consumes one
// 64-bit root seed; module streams are derive_seed(root, module_name, trial).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view module_name,
                                 std::uint64_t trial = 0) {
  std::uint64_t h = mix64(root ^ 0x6a09e667f3bcc909ull);
  for (unsigned char c : module_name) h = mix64(h ^ c);
  return mix64(h ^ trial);
}

// Counter-based mark for the box at (level, i, j): a pure function of the key,
// so evaluation order and laziness never change a sample.
inline std::uint64_t box_hash(std::uint64_t seed, int level, long long i, long long j) {
  std::uint64_t h = mix64(seed ^ (0x9d2c5680ull + (std::uint64_t)level));
  h = mix64(h ^ (std::uint64_t)i);
  h = mix64(h ^ (std::uint64_t)j);
  return h;
}

inline bool box_mark(std::uint64_t seed, int level, long long i, long long j, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;  // retain surely; no threshold rounding at the endpoint
  long double t = (long double)p * 18446744073709551616.0L;  // p * 2^64
  std::uint64_t thr =
      (t >= 18446744073709551615.0L) ? ~0ull : (std::uint64_t)t;
  return box_hash(seed, level, i, j) < thr;
}

// Sequential stream. Gaussians use the polar method on our own uniforms so the
// byte-for-byte sequence is pinned by this header, not by a library's
// unspecified std::normal_distribution algorithm.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // uniform in [0, 1), 53-bit resolution
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    // multiply-shift; bias is < 2^-64 * n, irrelevant at our sample counts
    return (std::uint64_t)(((__uint128_t)next_u64() * n) >> 64);
  }

  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace carpetlab
