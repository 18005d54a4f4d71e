#include "mccle/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mccle {

namespace {

double scaled_snr(double snr_linear, double s_max_db) {
  // 10*log10(snr)/s_max clamped to [0,1]; snr = 0 maps to 0.
  if (snr_linear <= 0.0) return 0.0;
  const double db = 10.0 * std::log10(snr_linear);
  return std::clamp(db / s_max_db, 0.0, 1.0);
}

}  // namespace

FeatureVector observation_features(const Observation& obs, double s_max_db) {
  FeatureVector f;
  const double heading = wrap_pi(obs.rx.heading);
  const double aoa = wrap_pi(obs.aoa_hat);
  f.v[3] = scaled_snr(obs.snr_hat, s_max_db);
  f.v[4] = std::cos(heading);
  f.v[5] = std::sin(heading);
  f.v[6] = std::cos(aoa);
  f.v[7] = std::sin(aoa);
  return f;
}

void set_candidate_features(FeatureVector& f, const Vec2& candidate,
                            const Vec2& rx_position) {
  const Vec2 diff = candidate - rx_position;
  const double dist = diff.norm();
  if (dist == 0.0) {
    // Candidate in the receiver's own cell: direction is undefined, use a
    // fixed fallback so dense grid scoring stays total.
    f.v[0] = 1.0;
    f.v[1] = 0.0;
    f.v[2] = 0.0;
    return;
  }
  f.v[0] = diff.x / dist;
  f.v[1] = diff.y / dist;
  f.v[2] = std::log10(std::max(1.0, dist));
}

FeatureVector featurize(const Vec2& candidate, const Observation& obs,
                        double s_max_db) {
  if (candidate - obs.rx.position == Vec2{0.0, 0.0}) {
    throw std::invalid_argument(
        "featurize: degenerate direction (candidate == rx position)");
  }
  FeatureVector f = observation_features(obs, s_max_db);
  set_candidate_features(f, candidate, obs.rx.position);
  return f;
}

}  // namespace mccle
