#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mccle/geometry.hpp"
#include "mccle/rng.hpp"
#include "mccle/scene.hpp"

namespace mccle {

struct ArrayConfig {
  int n_elements = 8;
  double spacing_wavelengths = 0.5;
  double carrier_hz = 12e9;
};

/// Single-element azimuth pattern: parabolic attenuation in dB with a
/// front-to-back clamp.
struct ElementPattern {
  double beamwidth_3db = deg2rad(65.0);
  double max_attenuation_db = 30.0;
};

/// Free-space link budget. Noise is unit-variance circular complex Gaussian
/// per antenna per sample, so matched-filter peak powers are directly SNRs.
struct LinkBudget {
  double snr0_db = 60.0;  // post-beamforming boresight SNR at 1 m
  double pathloss_exponent = 2.0;
};

struct MatchedFilterConfig {
  int n_samples = 5;
  double angle_grid_step = deg2rad(0.5);
  double sample_period = 1.0 / 200e6;  // 1 / bandwidth
};

struct SimConfig {
  ArrayConfig array{};
  ElementPattern pattern{};
  LinkBudget link{};
  MatchedFilterConfig mf{};
  bool noise_enabled = true;
  double min_separation_m = 1.0;

  void validate() const;  // throws std::invalid_argument
};

/// Receiver-side measurement: pose plus the matched-filter AoA/SNR
/// estimates. aoa_hat is a global-frame grid angle in [-pi, pi); snr_hat is
/// a linear power ratio.
struct Observation {
  Pose2D rx{};
  double aoa_hat = 0.0;
  double snr_hat = 0.0;
};

/// One training/evaluation pair: true transmitter location plus the
/// observation measured from it.
struct Sample {
  Vec2 tx{};
  Observation obs{};
};

/// Element amplitude gain at a local azimuth angle (1.0 at boresight).
double element_gain(double phi_local, const ElementPattern& pattern);

/// Unit-norm ULA steering vector at a local angle. Mirrored angles phi and
/// pi - phi produce identical vectors.
std::vector<std::complex<double>> array_response(double phi_local,
                                                 const ArrayConfig& cfg);

/// Matched-filter output snapshots z[n], one complex vector per sample tap.
/// Consumes from rng: gain phase, delay, then (if enabled) noise in
/// tap-major, element-minor, re-then-im order.
std::vector<std::vector<std::complex<double>>> matched_filter_snapshots(
    const Vec2& tx, const Pose2D& rx, RngStream& rng, const SimConfig& cfg);

/// Beamformed power |a(phi_local)^H z|^2 for one snapshot.
double beam_power(std::span<const std::complex<double>> snapshot,
                  double phi_local, const ArrayConfig& cfg);

/// Full measurement pipeline: snapshots, then AoA by correlation argmax over
/// the global angle grid (max over taps, ties to the lowest grid index) and
/// SNR from the peak value.
Observation simulate_measurement(const Vec2& tx, const Pose2D& rx,
                                 RngStream& rng, const SimConfig& cfg);

/// n independent samples with per-index rng streams; geometries closer than
/// the minimum separation are rejection-resampled. Deterministic given seed,
/// independent of worker count.
std::vector<Sample> generate_dataset(std::size_t n, std::uint64_t seed,
                                     const Region& region,
                                     const SimConfig& cfg, int workers = 1);

/// Canonical JSON of the simulator config (input to the config hash).
std::string sim_config_json(const SimConfig& cfg, const Region& region);

/// JSON-lines dataset with a metadata header line. Throws
/// std::runtime_error on unwritable path.
void write_dataset_jsonl(const std::string& path,
                         std::span<const Sample> samples, std::uint64_t seed,
                         const std::string& config_hash);

struct DatasetFile {
  std::vector<Sample> samples;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Parses a dataset file. Throws DatasetParseError with the 1-based line
/// number on malformed input.
DatasetFile read_dataset_jsonl(const std::string& path);

struct DatasetParseError : std::runtime_error {
  DatasetParseError(std::size_t line_number, const std::string& what);
  std::size_t line = 0;
};

}  // namespace mccle
