#pragma once

#include "mccle/geometry.hpp"
#include "mccle/rng.hpp"

namespace mccle {

/// Axis-aligned rectangular search region, meters. The transmitter prior is
/// uniform over it.
struct Region {
  double x_min = 0.0;
  double x_max = 100.0;
  double y_min = 0.0;
  double y_max = 100.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool contains(const Vec2& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  Vec2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
  void validate() const;  // throws std::invalid_argument on empty extent
};

/// Receiver position plus azimuth heading; heading is kept in [-pi, pi).
struct Pose2D {
  Vec2 position{};
  double heading = 0.0;

  Pose2D() = default;
  Pose2D(Vec2 pos, double heading_rad)
      : position(pos), heading(wrap_pi(heading_rad)) {}
};

/// Uniform prior density: 1/area inside the region, 0 outside.
double prior_density(const Vec2& x, const Region& region);

struct GeometryDraw {
  Vec2 tx;
  Pose2D rx;
};

/// Draws tx and rx position i.i.d. uniform over the region and the rx
/// heading uniform over [-pi, pi). Draw order: tx.x, tx.y, rx.x, rx.y,
/// heading.
GeometryDraw sample_geometry(RngStream& rng, const Region& region);

}  // namespace mccle
