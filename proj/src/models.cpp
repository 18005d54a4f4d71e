#include "mccle/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mccle {

namespace {

// Initial softplus-mapped diagonal of the Cholesky factor. Small so fresh
// Gaussian heads start near-uniform instead of astronomically peaked on
// meter-scale coordinates.
constexpr double kGaussianDiagInit = 0.01;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

MlpParams::MlpParams(int n_out) : n_out_(n_out) {
  if (n_out < 1) {
    throw std::invalid_argument("MlpParams: n_out must be >= 1");
  }
  v_.assign(off_b3() + static_cast<std::size_t>(n_out), 0.0);
}

void MlpParams::fill(double value) {
  std::fill(v_.begin(), v_.end(), value);
}

bool MlpParams::all_finite() const {
  return std::all_of(v_.begin(), v_.end(),
                     [](double x) { return std::isfinite(x); });
}

MlpParams MlpParams::random_init(int n_out, RngStream& rng) {
  MlpParams p(n_out);
  auto init_layer = [&rng](std::span<double> w, std::span<double> b,
                           int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : w) x = rng.uniform(-bound, bound);
    for (double& x : b) x = rng.uniform(-bound, bound);
  };
  init_layer(p.w1(), p.b1(), kFeatureDim);
  init_layer(p.w2(), p.b2(), kHidden1);
  init_layer(p.w3(), p.b3(), kHidden2);
  return p;
}

void mlp_forward(const MlpParams& p, const double* z, double* out) {
  const double* w1 = p.w1().data();
  const double* b1 = p.b1().data();
  const double* w2 = p.w2().data();
  const double* b2 = p.b2().data();
  const double* w3 = p.w3().data();
  const double* b3 = p.b3().data();
  const int n_out = p.n_out();

  double h1[kHidden1];
  double h2[kHidden2];
  for (int i = 0; i < kHidden1; ++i) {
    double acc = b1[i];
    const double* row = w1 + i * kFeatureDim;
    for (int j = 0; j < kFeatureDim; ++j) acc += row[j] * z[j];
    h1[i] = acc > 0.0 ? acc : 0.0;
  }
  for (int i = 0; i < kHidden2; ++i) {
    double acc = b2[i];
    const double* row = w2 + i * kHidden1;
    for (int j = 0; j < kHidden1; ++j) acc += row[j] * h1[j];
    h2[i] = acc > 0.0 ? acc : 0.0;
  }
  for (int o = 0; o < n_out; ++o) {
    double acc = b3[o];
    const double* row = w3 + o * kHidden2;
    for (int j = 0; j < kHidden2; ++j) acc += row[j] * h2[j];
    out[o] = acc;
  }
}

void mlp_forward_backward(const MlpParams& p, const double* z,
                          const double* dout, double* out_opt,
                          std::span<double> grad_flat) {
  if (grad_flat.size() != p.size()) {
    throw std::invalid_argument("mlp_forward_backward: grad size mismatch");
  }
  const double* w1 = p.w1().data();
  const double* b1 = p.b1().data();
  const double* w2 = p.w2().data();
  const double* b2 = p.b2().data();
  const double* w3 = p.w3().data();
  const double* b3 = p.b3().data();
  const int n_out = p.n_out();

  double pre1[kHidden1], h1[kHidden1];
  double pre2[kHidden2], h2[kHidden2];
  for (int i = 0; i < kHidden1; ++i) {
    double acc = b1[i];
    const double* row = w1 + i * kFeatureDim;
    for (int j = 0; j < kFeatureDim; ++j) acc += row[j] * z[j];
    pre1[i] = acc;
    h1[i] = acc > 0.0 ? acc : 0.0;
  }
  for (int i = 0; i < kHidden2; ++i) {
    double acc = b2[i];
    const double* row = w2 + i * kHidden1;
    for (int j = 0; j < kHidden1; ++j) acc += row[j] * h1[j];
    pre2[i] = acc;
    h2[i] = acc > 0.0 ? acc : 0.0;
  }

  double* g_w1 = grad_flat.data();
  double* g_b1 = grad_flat.data() + MlpParams::off_b1();
  double* g_w2 = grad_flat.data() + MlpParams::off_w2();
  double* g_b2 = grad_flat.data() + MlpParams::off_b2();
  double* g_w3 = grad_flat.data() + MlpParams::off_w3();
  double* g_b3 = grad_flat.data() + p.off_b3();

  double dh2[kHidden2] = {};
  for (int o = 0; o < n_out; ++o) {
    const double d = dout[o];
    if (out_opt != nullptr) {
      double acc = b3[o];
      const double* row = w3 + o * kHidden2;
      for (int j = 0; j < kHidden2; ++j) acc += row[j] * h2[j];
      out_opt[o] = acc;
    }
    if (d == 0.0) continue;
    g_b3[o] += d;
    double* grow = g_w3 + o * kHidden2;
    const double* row = w3 + o * kHidden2;
    for (int j = 0; j < kHidden2; ++j) {
      grow[j] += d * h2[j];
      dh2[j] += d * row[j];
    }
  }

  double dh1[kHidden1] = {};
  for (int i = 0; i < kHidden2; ++i) {
    if (pre2[i] <= 0.0 || dh2[i] == 0.0) continue;
    const double d = dh2[i];
    g_b2[i] += d;
    double* grow = g_w2 + i * kHidden1;
    const double* row = w2 + i * kHidden1;
    for (int j = 0; j < kHidden1; ++j) {
      grow[j] += d * h1[j];
      dh1[j] += d * row[j];
    }
  }

  for (int i = 0; i < kHidden1; ++i) {
    if (pre1[i] <= 0.0 || dh1[i] == 0.0) continue;
    const double d = dh1[i];
    g_b1[i] += d;
    double* grow = g_w1 + i * kFeatureDim;
    for (int j = 0; j < kFeatureDim; ++j) grow[j] += d * z[j];
  }
}

double mlp_score(const MlpParams& p, const FeatureVector& f) {
  if (p.n_out() != 1) {
    throw std::invalid_argument("mlp_score: expected a scalar-head MLP");
  }
  double out = 0.0;
  mlp_forward(p, f.v.data(), &out);
  return out;
}

double mlp_score_grad(const MlpParams& p, const FeatureVector& f,
                      MlpParams& grad) {
  if (p.n_out() != 1 || grad.n_out() != 1) {
    throw std::invalid_argument("mlp_score_grad: expected scalar-head MLPs");
  }
  grad.fill(0.0);
  double out = 0.0;
  const double dout = 1.0;
  mlp_forward_backward(p, f.v.data(), &dout, &out, grad.flat());
  return out;
}

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

GaussianHead decode_gaussian_head(const double* raw) {
  GaussianHead h;
  h.mu1 = raw[0];
  h.mu2 = raw[1];
  h.l11 = softplus(raw[2]);
  h.l21 = raw[3];
  h.l22 = softplus(raw[4]);
  return h;
}

namespace {

// Candidate in head coordinates: rx-relative displacement, or
// (clamped log distance, bearing) for polar mode.
Vec2 head_coordinates(CoordinateMode mode, const Vec2& candidate,
                      const Pose2D& rx) {
  const Vec2 diff = candidate - rx.position;
  if (mode == CoordinateMode::Cartesian) return diff;
  return {std::log10(std::max(1.0, diff.norm())), diff.bearing()};
}

struct QuadForm {
  double r1, r2, q1, q2, score;
};

QuadForm quad_form(const GaussianHead& head, CoordinateMode mode,
                   const Vec2& candidate, const Pose2D& rx) {
  const Vec2 v = head_coordinates(mode, candidate, rx);
  QuadForm q;
  q.r1 = v.x - head.mu1;
  q.r2 = mode == CoordinateMode::Polar ? wrap_pi(v.y - head.mu2)
                                       : v.y - head.mu2;
  q.q1 = head.l11 * q.r1 + head.l21 * q.r2;
  q.q2 = head.l22 * q.r2;
  q.score = -0.5 * (q.q1 * q.q1 + q.q2 * q.q2);
  return q;
}

}  // namespace

double gaussian_quadratic_score(const GaussianHead& head, CoordinateMode mode,
                                const Vec2& candidate, const Pose2D& rx) {
  return quad_form(head, mode, candidate, rx).score;
}

double gaussian_score(const MlpParams& trunk, CoordinateMode mode,
                      const Vec2& candidate, const Observation& obs,
                      double s_max_db) {
  if (trunk.n_out() != 5) {
    throw std::invalid_argument("gaussian_score: trunk must emit 5 outputs");
  }
  const FeatureVector f = observation_features(obs, s_max_db);
  double raw[5];
  mlp_forward(trunk, f.v.data(), raw);
  return gaussian_quadratic_score(decode_gaussian_head(raw), mode, candidate,
                                  obs.rx);
}

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mccle:
      return "mccle";
    case ModelKind::GaussCart:
      return "gauss-cart";
    case ModelKind::GaussPolar:
      return "gauss-polar";
    case ModelKind::Uniform:
      return "uniform";
  }
  return "unknown";
}

ModelKind model_kind_from_name(std::string_view name) {
  if (name == "mccle") return ModelKind::Mccle;
  if (name == "gauss-cart") return ModelKind::GaussCart;
  if (name == "gauss-polar") return ModelKind::GaussPolar;
  if (name == "uniform") return ModelKind::Uniform;
  throw std::invalid_argument("unknown model kind: " + std::string(name));
}

namespace {

class MccleScorer final : public Scorer {
 public:
  explicit MccleScorer(MlpParams params) : params_(std::move(params)) {}

  ModelKind kind() const override { return ModelKind::Mccle; }
  std::size_t param_count() const override { return params_.size(); }
  std::span<double> flat_params() override { return params_.flat(); }
  std::span<const double> flat_params() const override {
    return params_.flat();
  }

  double score(const Vec2& candidate, const Observation& obs) const override {
    FeatureVector f = observation_features(obs);
    set_candidate_features(f, candidate, obs.rx.position);
    return mlp_score(params_, f);
  }

  void score_set(const Observation& obs, std::span<const Vec2> candidates,
                 std::span<double> out) const override {
    FeatureVector f = observation_features(obs);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      set_candidate_features(f, candidates[k], obs.rx.position);
      mlp_forward(params_, f.v.data(), &out[k]);
    }
  }

  void accumulate_score_grad(const Observation& obs,
                             std::span<const Vec2> candidates,
                             std::span<const double> weights,
                             std::span<double> grad) const override {
    FeatureVector f = observation_features(obs);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (weights[k] == 0.0) continue;
      set_candidate_features(f, candidates[k], obs.rx.position);
      mlp_forward_backward(params_, f.v.data(), &weights[k], nullptr, grad);
    }
  }

  std::unique_ptr<Scorer> clone() const override {
    return std::make_unique<MccleScorer>(*this);
  }

  const MlpParams& params() const { return params_; }

 private:
  MlpParams params_;
};

class GaussianScorer final : public Scorer {
 public:
  GaussianScorer(MlpParams trunk, CoordinateMode mode)
      : trunk_(std::move(trunk)), mode_(mode) {}

  ModelKind kind() const override {
    return mode_ == CoordinateMode::Cartesian ? ModelKind::GaussCart
                                              : ModelKind::GaussPolar;
  }
  std::size_t param_count() const override { return trunk_.size(); }
  std::span<double> flat_params() override { return trunk_.flat(); }
  std::span<const double> flat_params() const override {
    return trunk_.flat();
  }

  double score(const Vec2& candidate, const Observation& obs) const override {
    return gaussian_score(trunk_, mode_, candidate, obs);
  }

  void score_set(const Observation& obs, std::span<const Vec2> candidates,
                 std::span<double> out) const override {
    const FeatureVector f = observation_features(obs);
    double raw[5];
    mlp_forward(trunk_, f.v.data(), raw);
    const GaussianHead head = decode_gaussian_head(raw);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      out[k] = gaussian_quadratic_score(head, mode_, candidates[k], obs.rx);
    }
  }

  void accumulate_score_grad(const Observation& obs,
                             std::span<const Vec2> candidates,
                             std::span<const double> weights,
                             std::span<double> grad) const override {
    const FeatureVector f = observation_features(obs);
    double raw[5];
    mlp_forward(trunk_, f.v.data(), raw);
    const GaussianHead head = decode_gaussian_head(raw);
    // Chain the per-candidate quadratic-form gradients into one trunk
    // backward pass; the trunk sees only the observation.
    double dout[5] = {0, 0, 0, 0, 0};
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const double w = weights[k];
      if (w == 0.0) continue;
      const QuadForm q = quad_form(head, mode_, candidates[k], obs.rx);
      dout[0] += w * (head.l11 * q.q1);
      dout[1] += w * (head.l21 * q.q1 + head.l22 * q.q2);
      dout[2] += w * (-q.q1 * q.r1) * logistic(raw[2]);
      dout[3] += w * (-q.q1 * q.r2);
      dout[4] += w * (-q.q2 * q.r2) * logistic(raw[4]);
    }
    mlp_forward_backward(trunk_, f.v.data(), dout, nullptr, grad);
  }

  std::unique_ptr<Scorer> clone() const override {
    return std::make_unique<GaussianScorer>(*this);
  }

 private:
  MlpParams trunk_;
  CoordinateMode mode_;
};

class UniformScorer final : public Scorer {
 public:
  ModelKind kind() const override { return ModelKind::Uniform; }
  std::size_t param_count() const override { return 0; }
  std::span<double> flat_params() override { return {}; }
  std::span<const double> flat_params() const override { return {}; }
  double score(const Vec2&, const Observation&) const override { return 0.0; }
  void score_set(const Observation&, std::span<const Vec2>,
                 std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  void accumulate_score_grad(const Observation&, std::span<const Vec2>,
                             std::span<const double>,
                             std::span<double>) const override {}
  std::unique_ptr<Scorer> clone() const override {
    return std::make_unique<UniformScorer>(*this);
  }
};

MlpParams gaussian_trunk_init(RngStream& rng) {
  MlpParams trunk = MlpParams::random_init(5, rng);
  const double raw_init = std::log(std::expm1(kGaussianDiagInit));
  trunk.b3()[2] = raw_init;
  trunk.b3()[4] = raw_init;
  return trunk;
}

}  // namespace

std::unique_ptr<Scorer> make_scorer(ModelKind kind, std::uint64_t seed) {
  RngStream rng(seed, stream_id(StreamKind::ParamInit));
  switch (kind) {
    case ModelKind::Mccle:
      return std::make_unique<MccleScorer>(MlpParams::random_init(1, rng));
    case ModelKind::GaussCart:
      return std::make_unique<GaussianScorer>(gaussian_trunk_init(rng),
                                              CoordinateMode::Cartesian);
    case ModelKind::GaussPolar:
      return std::make_unique<GaussianScorer>(gaussian_trunk_init(rng),
                                              CoordinateMode::Polar);
    case ModelKind::Uniform:
      return std::make_unique<UniformScorer>();
  }
  throw std::invalid_argument("make_scorer: unknown kind");
}

namespace {

int expected_n_out(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mccle:
      return 1;
    case ModelKind::GaussCart:
    case ModelKind::GaussPolar:
      return 5;
    default:
      throw CheckpointError("model kind has no checkpointable parameters");
  }
}

}  // namespace

void save_checkpoint(const Scorer& scorer, const std::string& path,
                     const CheckpointMeta& meta) {
  const int n_out = expected_n_out(scorer.kind());
  MlpParams p(n_out);
  const auto src = scorer.flat_params();
  if (src.size() != p.size()) {
    throw CheckpointError("parameter layout mismatch");
  }
  std::copy(src.begin(), src.end(), p.flat().begin());
  if (!p.all_finite()) {
    throw CheckpointError("refusing to save non-finite parameters");
  }

  nlohmann::json j;
  j["format"] = "mccle-checkpoint";
  j["version"] = 1;
  j["kind"] = std::string(model_kind_name(scorer.kind()));
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  auto arr = [](std::span<const double> s) {
    return std::vector<double>(s.begin(), s.end());
  };
  j["layers"] = {{"w1", arr(p.w1())}, {"b1", arr(p.b1())},
                 {"w2", arr(p.w2())}, {"b2", arr(p.b2())},
                 {"w3", arr(p.w3())}, {"b3", arr(p.b3())}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw CheckpointError("write failed: " + path);
}

std::unique_ptr<Scorer> load_checkpoint(const std::string& path,
                                        CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint (truncated or corrupt): ") +
                          e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "mccle-checkpoint") {
      throw CheckpointError("not a checkpoint file");
    }
    if (j.at("version").get<int>() != 1) {
      throw CheckpointError("unsupported checkpoint version");
    }
    const ModelKind kind =
        model_kind_from_name(j.at("kind").get<std::string>());
    MlpParams p(expected_n_out(kind));
    const auto& layers = j.at("layers");
    auto load_span = [&layers](const char* name, std::span<double> dst) {
      const auto& a = layers.at(name);
      if (!a.is_array() || a.size() != dst.size()) {
        throw CheckpointError(std::string("layer shape mismatch: ") + name);
      }
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = a[i].get<double>();
      }
    };
    load_span("w1", p.w1());
    load_span("b1", p.b1());
    load_span("w2", p.w2());
    load_span("b2", p.b2());
    load_span("w3", p.w3());
    load_span("b3", p.b3());
    if (!p.all_finite()) {
      throw CheckpointError("checkpoint contains non-finite parameters");
    }
    if (meta != nullptr) {
      meta->seed = j.at("seed").get<std::uint64_t>();
      meta->config_hash = j.at("config_hash").get<std::string>();
    }
    if (kind == ModelKind::Mccle) {
      return std::make_unique<MccleScorer>(std::move(p));
    }
    return std::make_unique<GaussianScorer>(
        std::move(p), kind == ModelKind::GaussCart ? CoordinateMode::Cartesian
                                                   : CoordinateMode::Polar);
  } catch (const CheckpointError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace mccle
