#pragma once

#include <array>

#include "mccle/geometry.hpp"
#include "mccle/rfsim.hpp"

namespace mccle {

inline constexpr int kFeatureDim = 8;
inline constexpr double kDefaultSnrScaleDb = 60.0;

/// Fixed physically-motivated input features for a (candidate, observation)
/// pair: unit direction from the receiver, clamped log distance, scaled SNR
/// in [0, 1], and heading/AoA trig pairs.
struct FeatureVector {
  std::array<double, kFeatureDim> v{};

  double u_x() const { return v[0]; }
  double u_y() const { return v[1]; }
  double log_dist() const { return v[2]; }
  double snr_scaled() const { return v[3]; }
  double cos_heading() const { return v[4]; }
  double sin_heading() const { return v[5]; }
  double cos_aoa() const { return v[6]; }
  double sin_aoa() const { return v[7]; }
};

/// Throws std::invalid_argument when candidate coincides with the receiver
/// position (degenerate direction).
FeatureVector featurize(const Vec2& candidate, const Observation& obs,
                        double s_max_db = kDefaultSnrScaleDb);

/// The candidate-independent part of the features: direction and distance
/// entries zeroed. Used by heads whose parameters may depend only on the
/// observation.
FeatureVector observation_features(const Observation& obs,
                                   double s_max_db = kDefaultSnrScaleDb);

/// Overwrites the candidate-dependent entries (u, d) in place; featurize()
/// is observation_features() followed by this, and batch scorers reuse the
/// observation part across candidates. A candidate coinciding with the
/// receiver gets a fixed fallback direction instead of an error, keeping
/// dense grid scoring total.
void set_candidate_features(FeatureVector& f, const Vec2& candidate,
                            const Vec2& rx_position);

}  // namespace mccle
