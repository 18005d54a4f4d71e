#pragma once

#include <cmath>

namespace mccle {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kDegToRad = kPi / 180.0;

inline double deg2rad(double deg) { return deg * kDegToRad; }
inline double rad2deg(double rad) { return rad / kDegToRad; }

/// Wrap an angle to [-pi, pi). Exact passthrough for inputs already in range.
inline double wrap_pi(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r >= kPi) r -= kTwoPi;
  if (r < -kPi) r += kTwoPi;
  return r;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  bool operator==(const Vec2& o) const = default;

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  /// Polar angle atan2(y, x) in [-pi, pi].
  double bearing() const { return std::atan2(y, x); }
};

/// Smallest absolute difference between two angles, in [0, pi].
inline double angle_distance(double a, double b) {
  return std::fabs(wrap_pi(a - b));
}

}  // namespace mccle
