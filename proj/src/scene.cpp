#include "mccle/scene.hpp"

#include <stdexcept>

namespace mccle {

void Region::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min)) {
    throw std::invalid_argument("Region: extent must be positive");
  }
}

double prior_density(const Vec2& x, const Region& region) {
  return region.contains(x) ? 1.0 / region.area() : 0.0;
}

GeometryDraw sample_geometry(RngStream& rng, const Region& region) {
  GeometryDraw g;
  g.tx.x = rng.uniform(region.x_min, region.x_max);
  g.tx.y = rng.uniform(region.y_min, region.y_max);
  Vec2 rx_pos;
  rx_pos.x = rng.uniform(region.x_min, region.x_max);
  rx_pos.y = rng.uniform(region.y_min, region.y_max);
  g.rx = Pose2D(rx_pos, rng.uniform(-kPi, kPi));
  return g;
}

}  // namespace mccle
