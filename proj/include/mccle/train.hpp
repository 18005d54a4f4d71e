#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mccle/models.hpp"
#include "mccle/rfsim.hpp"
#include "mccle/rng.hpp"
#include "mccle/scene.hpp"

namespace mccle {

/// K candidate transmitter positions; truth_index marks the embedded true
/// location when present.
struct CandidateSet {
  std::vector<Vec2> points;
  std::optional<std::size_t> truth_index;
};

struct TrainConfig {
  int k_candidates = 128;
  int epochs = 200;
  double learning_rate = 0.01;
  double weight_decay = 1e-4;
  int batch_size = 256;
  double split_fraction = 0.75;  // train share of the dataset
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = all hardware threads; never affects results

  void validate() const;  // throws std::invalid_argument
};

/// Default learning rates per model family.
double default_learning_rate(ModelKind kind);

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamWState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// K-1 uniform points plus the truth inserted at a uniformly random index.
/// Draw order: the K-1 points (x then y each), then the index.
CandidateSet sample_candidates(RngStream& rng, const Vec2& truth, int k,
                               const Region& region);

struct CelResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// One sample's contribution to the sampled CEL given its candidate scores:
/// -scores[truth] + log((1/K) sum exp scores), max-shifted and grouped so a
/// constant score vector gives exactly zero.
double sampled_cel_term(std::span<const double> scores,
                        std::size_t truth_index);

/// Sampled cross-entropy loss over a batch: mean over samples of
/// -g(truth) + log((1/K) sum_k exp g(candidate_k)), log-sum-exp max-shifted.
/// Gradients are exact reverse-mode w.r.t. the scorer parameters. Requires a
/// truth_index in every candidate set; throws on an empty batch.
CelResult sampled_cel(const Scorer& scorer, std::span<const Sample> batch,
                      std::span<const CandidateSet> candidates,
                      int workers = 1);

/// Loss only (no gradient); same value as sampled_cel.
double sampled_cel_loss(const Scorer& scorer, std::span<const Sample> batch,
                        std::span<const CandidateSet> candidates,
                        int workers = 1);

/// Decoupled-weight-decay Adam update with bias correction.
void adamw_step(std::span<double> params, std::span<const double> grad,
                AdamWState& state, double lr, double weight_decay,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::unique_ptr<Scorer> best;
  std::vector<EpochStats> history;
  int best_epoch = -1;  // -1 when epochs == 0 (initialization returned)
};

/// Deterministic train/validation split, fresh candidate sets per training
/// sample each epoch, frozen validation candidate sets, mini-batch AdamW,
/// best epoch selected by validation loss. Bit-reproducible for a given
/// seed, independent of worker count.
TrainResult train(std::span<const Sample> dataset, ModelKind kind,
                  const TrainConfig& cfg, const Region& region);

}  // namespace mccle
