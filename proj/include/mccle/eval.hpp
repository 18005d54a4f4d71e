#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mccle/models.hpp"
#include "mccle/rfsim.hpp"
#include "mccle/scene.hpp"
#include "mccle/train.hpp"

namespace mccle {

using PriorFn = std::function<double(const Vec2&)>;

PriorFn make_uniform_prior(const Region& region);

/// Candidate construction used for evaluation: a regular grid over the
/// region (the default spacing gives 31 x 31 = 961 points on the 100 m
/// scene) or K uniform random points.
struct EvalScheme {
  enum class Kind { Grid, Random };
  Kind kind = Kind::Grid;
  double grid_spacing = 100.0 / 30.0;
  int k_random = 1000;
};

/// Grid points with exact region endpoints: per axis the number of
/// intervals is round(extent / spacing). Row-major, y outer, x inner.
std::vector<Vec2> grid_candidates(const Region& region, double spacing);

/// Log posterior probabilities over the candidate points (max-shifted, so
/// exp sums to 1). Throws when every candidate has zero prior.
std::vector<double> log_posterior(const Scorer& scorer, const Observation& obs,
                                  std::span<const Vec2> candidates,
                                  const PriorFn& prior);

/// Posterior probability vector p_k proportional to exp(g(x_k, y)) p0(x_k).
std::vector<double> normalize_posterior(const Scorer& scorer,
                                        const Observation& obs,
                                        const CandidateSet& candidates,
                                        const PriorFn& prior);

/// Mean sampled cross-entropy loss over an evaluation set. Grid scheme
/// replaces the grid point nearest each truth with the truth itself
/// (K stays 961); random scheme inserts the truth at a random index
/// (K = k_random).
double eval_loss(const Scorer& scorer, std::span<const Sample> eval_set,
                 const EvalScheme& scheme, const Region& region,
                 std::uint64_t seed, int workers = 1);

struct Metrics {
  double geometric_improvement = 0.0;  // e^{-loss}
  double gap_closure_percent = 0.0;    // -loss / log K * 100
};

Metrics metrics(double loss, int k);

/// Shannon entropy (natural log) of a probability vector; validates
/// nonnegativity and unit sum to 1e-9.
double entropy(std::span<const double> p);

struct EntropyStats {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Mean/std of posterior entropy over the evaluation set, one posterior per
/// sample on the scheme's candidate sets.
EntropyStats entropy_stats(const Scorer& scorer,
                           std::span<const Sample> eval_set,
                           const EvalScheme& scheme, const Region& region,
                           std::uint64_t seed, int workers = 1);

/// Relative log-probability map L(x_k) = log(p_k * K) over a region grid.
/// Uniform scorers give exactly zero everywhere.
struct PosteriorGrid {
  Vec2 origin{};
  double spacing = 0.0;
  int nx = 0;
  int ny = 0;
  std::vector<double> log_relative;  // row-major, y outer

  const double& at(int ix, int iy) const {
    return log_relative[static_cast<std::size_t>(iy) *
                            static_cast<std::size_t>(nx) +
                        static_cast<std::size_t>(ix)];
  }
  Vec2 point(int ix, int iy) const {
    return {origin.x + spacing * ix, origin.y + spacing * iy};
  }
};

PosteriorGrid heatmap(const Scorer& scorer, const Observation& obs,
                      const Region& region, double spacing);

/// One reference geometry: transmitter at dx, dy from the receiver, receiver
/// heading in radians. Geometries are anchored so the TX-RX midpoint sits at
/// the region center, keeping both endpoints inside the scene.
struct ScenarioCase {
  double dx = 0.0;
  double dy = 0.0;
  double heading = 0.0;
};

/// The reference sweep: rows (dy, heading) = (10, 0) and (50, 0) crossed
/// with dx in {-80, -50, 0, 50, 80}.
std::vector<ScenarioCase> reference_scenarios();

struct ScenarioResult {
  ScenarioCase scenario{};
  Vec2 tx{};
  Observation obs{};
  PosteriorGrid grid{};
};

/// Simulates one observation per case (seeded per case index) and renders
/// its heatmap.
std::vector<ScenarioResult> scenario_suite(const Scorer& scorer,
                                           std::span<const ScenarioCase> cases,
                                           const Region& region,
                                           const SimConfig& sim,
                                           std::uint64_t seed,
                                           double spacing = 100.0 / 30.0);

/// CSV with origin/spacing header, rows bottom-up (y outer). A non-empty
/// comment (e.g. seed and config hash) is written as a leading '#' line.
/// Throws std::runtime_error on unwritable path.
void write_heatmap_csv(const PosteriorGrid& grid, const std::string& path,
                       const std::string& comment = "");

/// 8-bit binary PPM rendering with a fixed monotone warm colormap; the
/// comment goes into a PPM '#' header line.
void write_heatmap_ppm(const PosteriorGrid& grid, const std::string& path,
                       const std::string& comment = "");

}  // namespace mccle
