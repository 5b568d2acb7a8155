#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fastpfrec {

// Finalizer from splitmix64; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic sub-stream seed from a base seed and up to three tags
// (e.g. purpose, client id, round). Collision-resistant enough for
// simulation use; every consumer of randomness goes through this.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(base ^ 0x6a09e667f3bcc908ULL);
  s = mix64(s ^ mix64(a));
  s = mix64(s ^ mix64(b ^ 0xbb67ae8584caa73bULL));
  s = mix64(s ^ mix64(c ^ 0x3c6ef372fe94f82bULL));
  return s;
}

// Stream purposes for derive_seed so distinct uses never share a stream.
namespace stream {
constexpr std::uint64_t kSplit = 1;
constexpr std::uint64_t kInit = 2;
constexpr std::uint64_t kPerturb = 3;
constexpr std::uint64_t kTrain = 4;
constexpr std::uint64_t kLdp = 5;
constexpr std::uint64_t kAssign = 6;
constexpr std::uint64_t kAttack = 7;
constexpr std::uint64_t kSynthetic = 8;
constexpr std::uint64_t kNodeAttack = 9;
}  // namespace stream

// mt19937_64 core with explicit float conversions. The standard pins the
// engine's output sequence but not the distributions', so all draws are
// produced here and nowhere else.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); never returns an exact endpoint.
  double next_double_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; the paired draw is cached.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_cached_) {
      has_cached_ = false;
      return mean + stddev * cached_;
    }
    const double u1 = next_double_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // Laplace(0, scale) by inverse CDF: eta = -scale * sgn(p - 1/2) * ln(1 - 2|p - 1/2|).
  double laplace(double scale) {
    const double p = next_double_open();
    const double u = p - 0.5;
    const double sign = (u < 0.0) ? -1.0 : 1.0;
    return -scale * sign * std::log(1.0 - 2.0 * std::abs(u));
  }

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace fastpfrec
