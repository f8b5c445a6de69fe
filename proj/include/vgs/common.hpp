#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace vgs {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

/// 2D point/vector in normalized image coordinates.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {k * x, k * y}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

inline Vec2 operator*(double k, Vec2 v) { return {k * v.x, k * v.y}; }

/// Symmetric 2x2 matrix (covariance and its inverse live here).
struct Sym2 {
  double xx = 1.0, xy = 0.0, yy = 1.0;

  double det() const { return xx * yy - xy * xy; }
  Sym2 inverse() const {
    const double d = det();
    return {yy / d, -xy / d, xx / d};
  }
  /// Quadratic form v' * M * v.
  double quad(Vec2 v) const { return v.x * (xx * v.x + xy * v.y) + v.y * (xy * v.x + yy * v.y); }
  Vec2 mul(Vec2 v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
};

struct Color3 {
  double r = 0.0, g = 0.0, b = 0.0;
};

inline double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

/// Deterministic RNG wrapper. Distributions are implemented here rather than
/// through std::*_distribution so that streams are identical across standard
/// library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal() {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
  std::mt19937_64 eng_;
};

/// File/ingestion failure carrying the offending path.
class io_error : public std::runtime_error {
public:
  io_error(const std::string& path, const std::string& what)
      : std::runtime_error(what + ": " + path), path_(path) {}
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

/// Checkpoint corruption with the byte offset where parsing failed.
class corrupt_checkpoint : public std::runtime_error {
public:
  corrupt_checkpoint(std::uint64_t offset, const std::string& what)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

private:
  std::uint64_t offset_;
};

/// Editing failure carrying script op index (or -1) and component id (or -1).
class edit_error : public std::runtime_error {
public:
  edit_error(const std::string& what, int op_index = -1, int component = -1)
      : std::runtime_error(what), op_index_(op_index), component_(component) {}
  int op_index() const { return op_index_; }
  int component() const { return component_; }

private:
  int op_index_;
  int component_;
};

} // namespace vgs
