#pragma once

#include <soibag/types.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>

namespace soibag {

// Deterministic seeded RNG. All randomness in the library flows through this
// so that a run is reproducible bit-for-bit from its seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed + 0x9E3779B97F4A7C15ULL)) {}

  std::uint64_t next_u64() {
    // xorshift64*; state seeded via splitmix64 to decorrelate small seeds.
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  // Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  double normal(double mean = 0.0, double sigma = 1.0) {
    // Box-Muller, one value per call (cached pair kept for determinism).
    if (have_cached_) {
      have_cached_ = false;
      return mean + sigma * cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return mean + sigma * r * std::cos(a);
  }

  Vec3 normal3(double sigma) {
    return Vec3(normal(0.0, sigma), normal(0.0, sigma), normal(0.0, sigma));
  }

  Vec3 uniform_in_box(const Vec3& lo, const Vec3& hi) {
    return Vec3(uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()),
                uniform(lo.z(), hi.z()));
  }

  // Uniform rotation via Shoemake's subgroup algorithm.
  Mat3 random_rotation() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double u3 = uniform01();
    const double two_pi = 2.0 * std::numbers::pi;
    const double sq1 = std::sqrt(1.0 - u1), sq2 = std::sqrt(u1);
    Eigen::Quaterniond q(sq2 * std::cos(two_pi * u3), sq1 * std::sin(two_pi * u2),
                         sq1 * std::cos(two_pi * u2), sq2 * std::sin(two_pi * u3));
    return q.normalized().toRotationMatrix();
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace soibag
