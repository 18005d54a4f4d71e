#include "mccle/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mccle/parallel.hpp"

namespace mccle {

namespace {

// Samples per parallel chunk in batch loss/gradient evaluation. Fixed so
// chunk boundaries (and therefore summation order) never depend on the
// worker count.
constexpr std::size_t kCelChunk = 8;

}  // namespace

void TrainConfig::validate() const {
  if (k_candidates < 2) {
    throw std::invalid_argument("TrainConfig: k_candidates must be >= 2");
  }
  if (epochs < 0) {
    throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  }
  if (!(split_fraction > 0.0) || !(split_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: split_fraction must be in (0,1)");
  }
}

double default_learning_rate(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mccle:
      return 0.01;
    case ModelKind::GaussCart:
    case ModelKind::GaussPolar:
      return 0.002;
    case ModelKind::Uniform:
      return 0.0;
  }
  return 0.0;
}

CandidateSet sample_candidates(RngStream& rng, const Vec2& truth, int k,
                               const Region& region) {
  if (k < 2) {
    throw std::invalid_argument("sample_candidates: k must be >= 2");
  }
  CandidateSet set;
  set.points.resize(static_cast<std::size_t>(k));
  for (int i = 0; i + 1 < k; ++i) {
    set.points[static_cast<std::size_t>(i)] = {
        rng.uniform(region.x_min, region.x_max),
        rng.uniform(region.y_min, region.y_max)};
  }
  const std::size_t idx = rng.next_below(static_cast<std::uint64_t>(k));
  // Shift the tail up by one slot and place the truth at idx.
  for (std::size_t j = static_cast<std::size_t>(k) - 1; j > idx; --j) {
    set.points[j] = set.points[j - 1];
  }
  set.points[idx] = truth;
  set.truth_index = idx;
  return set;
}

double sampled_cel_term(std::span<const double> scores,
                        std::size_t truth_index) {
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores) m = std::max(m, s);
  double sum_exp = 0.0;
  for (double s : scores) sum_exp += std::exp(s - m);
  const double log_sum = std::log(sum_exp);
  const double log_k = std::log(static_cast<double>(scores.size()));
  // Grouped so a constant score vector yields exactly zero.
  return (m - scores[truth_index]) + (log_sum - log_k);
}

namespace {

// Per-sample loss; when want_grad is set, also fills weights with the
// per-candidate gradient coefficients scaled by inv_n and accumulates the
// parameter gradient into grad.
double cel_one_sample(const Scorer& scorer, const Sample& sample,
                      const CandidateSet& cs, std::vector<double>& scores,
                      std::vector<double>& weights, double inv_n,
                      std::span<double> grad, bool want_grad) {
  const std::size_t k = cs.points.size();
  scores.resize(k);
  scorer.score_set(sample.obs, cs.points, scores);
  const std::size_t truth = *cs.truth_index;
  const double loss = sampled_cel_term(scores, truth);

  if (want_grad) {
    double m = -std::numeric_limits<double>::infinity();
    for (double s : scores) m = std::max(m, s);
    weights.resize(k);
    double sum_exp = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      weights[i] = std::exp(scores[i] - m);
      sum_exp += weights[i];
    }
    const double scale = inv_n / sum_exp;
    for (std::size_t i = 0; i < k; ++i) weights[i] *= scale;
    weights[truth] -= inv_n;
    scorer.accumulate_score_grad(sample.obs, cs.points, weights, grad);
  }
  return loss;
}

void validate_cel_inputs(std::span<const Sample> batch,
                         std::span<const CandidateSet> candidates) {
  if (batch.empty()) {
    throw std::invalid_argument("sampled_cel: empty batch");
  }
  if (batch.size() != candidates.size()) {
    throw std::invalid_argument(
        "sampled_cel: batch and candidate set counts differ");
  }
  for (const CandidateSet& cs : candidates) {
    if (!cs.truth_index.has_value() ||
        *cs.truth_index >= cs.points.size() || cs.points.empty()) {
      throw std::invalid_argument(
          "sampled_cel: every candidate set needs a valid truth_index");
    }
  }
}

}  // namespace

CelResult sampled_cel(const Scorer& scorer, std::span<const Sample> batch,
                      std::span<const CandidateSet> candidates, int workers) {
  validate_cel_inputs(batch, candidates);
  const std::size_t n = batch.size();
  const std::size_t p = scorer.param_count();
  const double inv_n = 1.0 / static_cast<double>(n);

  const std::size_t n_chunks = (n + kCelChunk - 1) / kCelChunk;
  std::vector<double> chunk_loss(n_chunks, 0.0);
  std::vector<std::vector<double>> chunk_grad(n_chunks);

  parallel_chunks(n, kCelChunk, workers,
                  [&](std::size_t begin, std::size_t end, std::size_t c) {
                    chunk_grad[c].assign(p, 0.0);
                    std::vector<double> scores;
                    std::vector<double> weights;
                    double loss = 0.0;
                    for (std::size_t i = begin; i < end; ++i) {
                      loss += cel_one_sample(scorer, batch[i], candidates[i],
                                             scores, weights, inv_n,
                                             chunk_grad[c], true);
                    }
                    chunk_loss[c] = loss;
                  });

  CelResult result;
  result.grad.assign(p, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    total += chunk_loss[c];
    for (std::size_t j = 0; j < p; ++j) result.grad[j] += chunk_grad[c][j];
  }
  result.loss = total * inv_n;
  return result;
}

double sampled_cel_loss(const Scorer& scorer, std::span<const Sample> batch,
                        std::span<const CandidateSet> candidates,
                        int workers) {
  validate_cel_inputs(batch, candidates);
  const std::size_t n = batch.size();
  const std::size_t n_chunks = (n + kCelChunk - 1) / kCelChunk;
  std::vector<double> chunk_loss(n_chunks, 0.0);
  parallel_chunks(n, kCelChunk, workers,
                  [&](std::size_t begin, std::size_t end, std::size_t c) {
                    std::vector<double> scores;
                    std::vector<double> weights;
                    double loss = 0.0;
                    for (std::size_t i = begin; i < end; ++i) {
                      loss += cel_one_sample(scorer, batch[i], candidates[i],
                                             scores, weights, 0.0, {}, false);
                    }
                    chunk_loss[c] = loss;
                  });
  double total = 0.0;
  for (double l : chunk_loss) total += l;
  return total / static_cast<double>(n);
}

void adamw_step(std::span<double> params, std::span<const double> grad,
                AdamWState& state, double lr, double weight_decay,
                double beta1, double beta2, double eps) {
  if (params.size() != grad.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw std::invalid_argument("adamw_step: shape mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) +
                       weight_decay * params[i]);
  }
}

TrainResult train(std::span<const Sample> dataset, ModelKind kind,
                  const TrainConfig& cfg, const Region& region) {
  cfg.validate();
  region.validate();
  if (dataset.empty()) {
    throw std::invalid_argument("train: dataset must be non-empty");
  }

  const std::size_t n = dataset.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  {
    RngStream rng(cfg.seed, stream_id(StreamKind::Split));
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = rng.next_below(i + 1);
      std::swap(perm[i], perm[j]);
    }
  }
  std::size_t n_train = static_cast<std::size_t>(
      std::floor(cfg.split_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n);
  if (n_train == n && n >= 2) n_train = n - 1;

  std::vector<std::size_t> train_idx(perm.begin(),
                                     perm.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> val_idx(perm.begin() + static_cast<long>(n_train),
                                   perm.end());
  if (val_idx.empty()) val_idx = train_idx;  // degenerate single-sample case

  auto scorer = make_scorer(kind, cfg.seed);

  TrainResult result;
  if (cfg.epochs == 0) {
    result.best = std::move(scorer);
    return result;
  }

  std::vector<Sample> val_samples;
  std::vector<CandidateSet> val_sets;
  val_samples.reserve(val_idx.size());
  val_sets.reserve(val_idx.size());
  for (const std::size_t idx : val_idx) {
    val_samples.push_back(dataset[idx]);
    RngStream rng(cfg.seed, stream_id(StreamKind::ValCandidates, idx));
    val_sets.push_back(sample_candidates(rng, dataset[idx].tx,
                                         cfg.k_candidates, region));
  }

  AdamWState state(scorer->param_count());
  double best_val = std::numeric_limits<double>::infinity();
  result.history.reserve(static_cast<std::size_t>(cfg.epochs));

  std::vector<std::size_t> order = train_idx;
  std::vector<Sample> batch;
  std::vector<CandidateSet> batch_sets;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    RngStream shuffle_rng(
        cfg.seed, stream_id(StreamKind::Shuffle,
                            static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const std::size_t j = shuffle_rng.next_below(i + 1);
      std::swap(order[i], order[j]);
    }

    double epoch_loss_sum = 0.0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      batch.clear();
      batch_sets.clear();
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t idx = order[i];
        batch.push_back(dataset[idx]);
        RngStream cand_rng(
            cfg.seed,
            stream_id(StreamKind::TrainCandidates,
                      (static_cast<std::uint64_t>(epoch) << 32) ^ idx));
        batch_sets.push_back(sample_candidates(cand_rng, dataset[idx].tx,
                                               cfg.k_candidates, region));
      }
      CelResult r = sampled_cel(*scorer, batch, batch_sets, cfg.workers);
      adamw_step(scorer->flat_params(), r.grad, state, cfg.learning_rate,
                 cfg.weight_decay);
      epoch_loss_sum += r.loss * static_cast<double>(stop - start);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss_sum / static_cast<double>(order.size());
    stats.val_loss =
        sampled_cel_loss(*scorer, val_samples, val_sets, cfg.workers);
    result.history.push_back(stats);

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.best = scorer->clone();
      result.best_epoch = epoch;
    }
  }

  if (!result.best) {  // all-NaN validation losses; fall back to final
    result.best = scorer->clone();
    result.best_epoch = cfg.epochs;
  }
  return result;
}

}  // namespace mccle
