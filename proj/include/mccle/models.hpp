#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mccle/features.hpp"
#include "mccle/geometry.hpp"
#include "mccle/rfsim.hpp"
#include "mccle/rng.hpp"

namespace mccle {

inline constexpr int kHidden1 = 64;
inline constexpr int kHidden2 = 16;

/// Parameters of the 8 -> 64 -> 16 -> n_out ReLU MLP, stored flat
/// (w1 row-major, b1, w2, b2, w3, b3) so optimizers can treat them as one
/// vector. n_out is 1 for the scalar scorer and 5 for Gaussian heads.
class MlpParams {
 public:
  explicit MlpParams(int n_out);

  int n_out() const { return n_out_; }
  std::size_t size() const { return v_.size(); }
  std::span<double> flat() { return v_; }
  std::span<const double> flat() const { return v_; }

  std::span<double> w1() { return flat().subspan(0, kHidden1 * kFeatureDim); }
  std::span<double> b1() { return flat().subspan(off_b1(), kHidden1); }
  std::span<double> w2() { return flat().subspan(off_w2(), kHidden2 * kHidden1); }
  std::span<double> b2() { return flat().subspan(off_b2(), kHidden2); }
  std::span<double> w3() {
    return flat().subspan(off_w3(), static_cast<std::size_t>(n_out_) * kHidden2);
  }
  std::span<double> b3() {
    return flat().subspan(off_b3(), static_cast<std::size_t>(n_out_));
  }
  std::span<const double> w1() const {
    return flat().subspan(0, kHidden1 * kFeatureDim);
  }
  std::span<const double> b1() const { return flat().subspan(off_b1(), kHidden1); }
  std::span<const double> w2() const {
    return flat().subspan(off_w2(), kHidden2 * kHidden1);
  }
  std::span<const double> b2() const { return flat().subspan(off_b2(), kHidden2); }
  std::span<const double> w3() const {
    return flat().subspan(off_w3(), static_cast<std::size_t>(n_out_) * kHidden2);
  }
  std::span<const double> b3() const {
    return flat().subspan(off_b3(), static_cast<std::size_t>(n_out_));
  }

  void fill(double value);
  bool all_finite() const;

  static MlpParams zeros(int n_out) { return MlpParams(n_out); }
  /// Fan-in-scaled uniform init, layer by layer (weights then bias).
  static MlpParams random_init(int n_out, RngStream& rng);

  static constexpr std::size_t off_b1() { return kHidden1 * kFeatureDim; }
  static constexpr std::size_t off_w2() { return off_b1() + kHidden1; }
  static constexpr std::size_t off_b2() {
    return off_w2() + kHidden2 * kHidden1;
  }
  static constexpr std::size_t off_w3() { return off_b2() + kHidden2; }
  std::size_t off_b3() const {
    return off_w3() + static_cast<std::size_t>(n_out_) * kHidden2;
  }

 private:
  int n_out_;
  std::vector<double> v_;
};

/// Forward pass; out must hold n_out values.
void mlp_forward(const MlpParams& p, const double* z, double* out);

/// Forward plus reverse-mode accumulation: adds the gradient of
/// sum_j dout[j] * out_j w.r.t. every parameter into grad_flat (same layout
/// as MlpParams::flat()). ReLU subgradient at exactly 0 is taken as 0.
/// Returns out through out_opt when non-null.
void mlp_forward_backward(const MlpParams& p, const double* z,
                          const double* dout, double* out_opt,
                          std::span<double> grad_flat);

/// Scalar-head scorer (n_out == 1).
double mlp_score(const MlpParams& p, const FeatureVector& f);
/// Exact gradient of the score w.r.t. every parameter (grad overwritten).
double mlp_score_grad(const MlpParams& p, const FeatureVector& f,
                      MlpParams& grad);

enum class CoordinateMode { Cartesian, Polar };

/// Decoded Gaussian head: mean plus lower-triangular Cholesky factor of the
/// precision, diagonal mapped through softplus so Q = L L^T is always PSD.
struct GaussianHead {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double l11 = 0.0;
  double l21 = 0.0;
  double l22 = 0.0;
};

double softplus(double x);

/// Raw trunk outputs (mu1, mu2, l11_raw, l21, l22_raw) -> decoded head.
GaussianHead decode_gaussian_head(const double* raw);

/// -1/2 (v - mu)^T Q (v - mu) with v the candidate in rx-relative Cartesian
/// displacement or (clamped log distance, bearing) polar coordinates;
/// polar angle residuals are wrapped to [-pi, pi).
double gaussian_quadratic_score(const GaussianHead& head, CoordinateMode mode,
                                const Vec2& candidate, const Pose2D& rx);

/// Full Gaussian baseline score: trunk (n_out == 5) consumes
/// observation-only features, head scores the candidate.
double gaussian_score(const MlpParams& trunk, CoordinateMode mode,
                      const Vec2& candidate, const Observation& obs,
                      double s_max_db = kDefaultSnrScaleDb);

enum class ModelKind { Mccle, GaussCart, GaussPolar, Uniform };

std::string_view model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(std::string_view name);  // throws on unknown

/// Candidate scorer with a flat parameter view for optimization. Scoring is
/// const and safe to call concurrently; parameters are mutated only through
/// flat_params() by a single writer.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ModelKind kind() const = 0;
  virtual std::size_t param_count() const = 0;
  virtual std::span<double> flat_params() = 0;
  virtual std::span<const double> flat_params() const = 0;

  virtual double score(const Vec2& candidate, const Observation& obs) const = 0;
  /// Scores every candidate of one observation (out.size() == candidates
  /// count). Heads that depend on the observation alone evaluate their trunk
  /// once here.
  virtual void score_set(const Observation& obs, std::span<const Vec2> candidates,
                         std::span<double> out) const = 0;
  /// Accumulates sum_k weights[k] * d score(candidate_k) / d params into
  /// grad (grad.size() == param_count()).
  virtual void accumulate_score_grad(const Observation& obs,
                                     std::span<const Vec2> candidates,
                                     std::span<const double> weights,
                                     std::span<double> grad) const = 0;
  virtual std::unique_ptr<Scorer> clone() const = 0;
};

/// Fresh scorer with seeded parameter initialization. Uniform ignores the
/// seed (it has no parameters and scores everything 0).
std::unique_ptr<Scorer> make_scorer(ModelKind kind, std::uint64_t seed);

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Versioned JSON checkpoint of flat parameter arrays; round-trips
/// bit-exactly. Throws CheckpointError on non-finite parameters or
/// unwritable path.
void save_checkpoint(const Scorer& scorer, const std::string& path,
                     const CheckpointMeta& meta);

/// Loads a self-describing checkpoint; throws CheckpointError on version,
/// shape, or parse problems.
std::unique_ptr<Scorer> load_checkpoint(const std::string& path,
                                        CheckpointMeta* meta = nullptr);

}  // namespace mccle
