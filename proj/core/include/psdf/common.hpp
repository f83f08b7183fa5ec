#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace psdf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

constexpr double kPi = 3.14159265358979323846;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based stream derivation: every stochastic site draws from
// rng_for(seed, a, b) so runs are resumable without serializing RNG state.
inline std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t a = 0,
                               std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(a ^ 0x517cc1b727220a95ULL));
  s = splitmix64(s ^ splitmix64(b ^ 0x2545f4914f6cdd1dULL));
  return std::mt19937_64(s);
}

// Portable transforms (std distributions are implementation-defined).
inline double uniform01(std::mt19937_64& g) {
  return (g() >> 11) * 0x1.0p-53;
}
inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}
inline double normal01(std::mt19937_64& g) {
  double u1 = uniform01(g), u2 = uniform01(g);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}
inline Vec3 random_unit_vector(std::mt19937_64& g) {
  for (;;) {
    Vec3 v(2 * uniform01(g) - 1, 2 * uniform01(g) - 1, 2 * uniform01(g) - 1);
    double n = v.norm();
    if (n > 1e-9 && n <= 1.0) return v / n;
  }
}

inline double sqr(double x) { return x * x; }

inline Vec3 safe_normalize(const Vec3& v, double floor = 1e-12) {
  double n = v.norm();
  return v / std::max(n, floor);
}

std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::string& path);
std::string hex64(std::uint64_t h);

int max_threads();  // honours PSDF_DETERMINISTIC=1 (pins to 1)

}  // namespace psdf
