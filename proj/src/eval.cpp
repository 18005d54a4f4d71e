#include "mccle/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "mccle/parallel.hpp"

namespace mccle {

PriorFn make_uniform_prior(const Region& region) {
  return [region](const Vec2& x) { return prior_density(x, region); };
}

std::vector<Vec2> grid_candidates(const Region& region, double spacing) {
  region.validate();
  if (!(spacing > 0.0)) {
    throw std::invalid_argument("grid_candidates: spacing must be positive");
  }
  const auto intervals = [&](double extent) {
    return std::max<long>(1, std::llround(extent / spacing));
  };
  const long nx_int = intervals(region.width());
  const long ny_int = intervals(region.height());
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>((nx_int + 1) * (ny_int + 1)));
  for (long iy = 0; iy <= ny_int; ++iy) {
    const double y =
        region.y_min + region.height() * static_cast<double>(iy) /
                           static_cast<double>(ny_int);
    for (long ix = 0; ix <= nx_int; ++ix) {
      const double x =
          region.x_min + region.width() * static_cast<double>(ix) /
                             static_cast<double>(nx_int);
      pts.push_back({x, y});
    }
  }
  return pts;
}

std::vector<double> log_posterior(const Scorer& scorer, const Observation& obs,
                                  std::span<const Vec2> candidates,
                                  const PriorFn& prior) {
  if (candidates.empty()) {
    throw std::invalid_argument("log_posterior: no candidates");
  }
  const std::size_t k = candidates.size();
  std::vector<double> s(k);
  scorer.score_set(obs, candidates, s);
  for (std::size_t i = 0; i < k; ++i) {
    const double p0 = prior(candidates[i]);
    s[i] = p0 > 0.0 ? s[i] + std::log(p0)
                    : -std::numeric_limits<double>::infinity();
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double v : s) m = std::max(m, v);
  if (!std::isfinite(m)) {
    throw std::domain_error(
        "log_posterior: all candidates outside prior support");
  }
  double sum_exp = 0.0;
  for (double v : s) sum_exp += std::exp(v - m);
  const double log_sum = std::log(sum_exp);
  for (double& v : s) v = (v - m) - log_sum;
  return s;
}

std::vector<double> normalize_posterior(const Scorer& scorer,
                                        const Observation& obs,
                                        const CandidateSet& candidates,
                                        const PriorFn& prior) {
  std::vector<double> p =
      log_posterior(scorer, obs, candidates.points, prior);
  for (double& v : p) v = std::exp(v);
  return p;
}

namespace {

// Grid scheme: replace the grid point nearest the truth with the truth
// itself, computed directly from the lattice geometry.
std::size_t nearest_grid_index(const Region& region, long nx_int, long ny_int,
                               const Vec2& p) {
  const auto snap = [](double t, long n_int) {
    const long i = std::llround(t * static_cast<double>(n_int));
    return std::clamp<long>(i, 0, n_int);
  };
  const long ix = snap((p.x - region.x_min) / region.width(), nx_int);
  const long iy = snap((p.y - region.y_min) / region.height(), ny_int);
  return static_cast<std::size_t>(iy * (nx_int + 1) + ix);
}

struct SchemeContext {
  std::vector<Vec2> base_grid;
  long nx_int = 0;
  long ny_int = 0;
};

SchemeContext make_scheme_context(const EvalScheme& scheme,
                                  const Region& region) {
  SchemeContext ctx;
  if (scheme.kind == EvalScheme::Kind::Grid) {
    ctx.base_grid = grid_candidates(region, scheme.grid_spacing);
    ctx.nx_int = std::max<long>(1, std::llround(region.width() /
                                                scheme.grid_spacing));
    ctx.ny_int = std::max<long>(1, std::llround(region.height() /
                                                scheme.grid_spacing));
  } else if (scheme.k_random < 2) {
    throw std::invalid_argument("EvalScheme: k_random must be >= 2");
  }
  return ctx;
}

CandidateSet scheme_candidates(const EvalScheme& scheme,
                               const SchemeContext& ctx, const Region& region,
                               const Vec2& truth, std::uint64_t seed,
                               std::size_t sample_index) {
  CandidateSet cs;
  if (scheme.kind == EvalScheme::Kind::Grid) {
    cs.points = ctx.base_grid;
    const std::size_t idx =
        nearest_grid_index(region, ctx.nx_int, ctx.ny_int, truth);
    cs.points[idx] = truth;
    cs.truth_index = idx;
  } else {
    RngStream rng(seed, stream_id(StreamKind::EvalCandidates, sample_index));
    cs = sample_candidates(rng, truth, scheme.k_random, region);
  }
  return cs;
}

}  // namespace

double eval_loss(const Scorer& scorer, std::span<const Sample> eval_set,
                 const EvalScheme& scheme, const Region& region,
                 std::uint64_t seed, int workers) {
  if (eval_set.empty()) {
    throw std::invalid_argument("eval_loss: empty evaluation set");
  }
  const SchemeContext ctx = make_scheme_context(scheme, region);
  const std::size_t n = eval_set.size();
  constexpr std::size_t kChunk = 8;
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> chunk_loss(n_chunks, 0.0);
  parallel_chunks(n, kChunk, workers,
                  [&](std::size_t begin, std::size_t end, std::size_t c) {
                    std::vector<double> scores;
                    double loss = 0.0;
                    for (std::size_t i = begin; i < end; ++i) {
                      const CandidateSet cs =
                          scheme_candidates(scheme, ctx, region,
                                            eval_set[i].tx, seed, i);
                      scores.resize(cs.points.size());
                      scorer.score_set(eval_set[i].obs, cs.points, scores);
                      loss += sampled_cel_term(scores, *cs.truth_index);
                    }
                    chunk_loss[c] = loss;
                  });
  double total = 0.0;
  for (double l : chunk_loss) total += l;
  return total / static_cast<double>(n);
}

Metrics metrics(double loss, int k) {
  if (k < 2) throw std::invalid_argument("metrics: k must be >= 2");
  Metrics m;
  m.geometric_improvement = std::exp(-loss);
  m.gap_closure_percent = -loss / std::log(static_cast<double>(k)) * 100.0;
  return m;
}

double entropy(std::span<const double> p) {
  double sum = 0.0;
  double h = 0.0;
  for (double v : p) {
    if (v < 0.0) {
      throw std::invalid_argument("entropy: negative probability");
    }
    sum += v;
    if (v > 0.0) h -= v * std::log(v);
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("entropy: probabilities must sum to 1");
  }
  return h;
}

EntropyStats entropy_stats(const Scorer& scorer,
                           std::span<const Sample> eval_set,
                           const EvalScheme& scheme, const Region& region,
                           std::uint64_t seed, int workers) {
  if (eval_set.empty()) {
    throw std::invalid_argument("entropy_stats: empty evaluation set");
  }
  const SchemeContext ctx = make_scheme_context(scheme, region);
  const PriorFn prior = make_uniform_prior(region);
  const std::size_t n = eval_set.size();
  std::vector<double> h(n, 0.0);
  parallel_chunks(n, 8, workers,
                  [&](std::size_t begin, std::size_t end, std::size_t) {
                    for (std::size_t i = begin; i < end; ++i) {
                      const CandidateSet cs =
                          scheme_candidates(scheme, ctx, region,
                                            eval_set[i].tx, seed, i);
                      const std::vector<double> p = normalize_posterior(
                          scorer, eval_set[i].obs, cs, prior);
                      h[i] = entropy(p);
                    }
                  });
  EntropyStats stats;
  for (double v : h) stats.mean += v;
  stats.mean /= static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : h) ss += (v - stats.mean) * (v - stats.mean);
    stats.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return stats;
}

PosteriorGrid heatmap(const Scorer& scorer, const Observation& obs,
                      const Region& region, double spacing) {
  const std::vector<Vec2> pts = grid_candidates(region, spacing);
  const long nx_int =
      std::max<long>(1, std::llround(region.width() / spacing));
  const long ny_int =
      std::max<long>(1, std::llround(region.height() / spacing));

  std::vector<double> l =
      log_posterior(scorer, obs, pts, make_uniform_prior(region));
  const double log_k = std::log(static_cast<double>(pts.size()));
  for (double& v : l) v += log_k;

  PosteriorGrid grid;
  grid.origin = {region.x_min, region.y_min};
  grid.spacing = region.width() / static_cast<double>(nx_int);
  grid.nx = static_cast<int>(nx_int + 1);
  grid.ny = static_cast<int>(ny_int + 1);
  grid.log_relative = std::move(l);
  return grid;
}

std::vector<ScenarioCase> reference_scenarios() {
  static const double dxs[] = {-80.0, -50.0, 0.0, 50.0, 80.0};
  static const double rows[][2] = {{10.0, 0.0}, {50.0, 0.0}};  // dy, heading
  std::vector<ScenarioCase> cases;
  for (const auto& row : rows) {
    for (double dx : dxs) {
      cases.push_back({dx, row[0], row[1]});
    }
  }
  return cases;
}

std::vector<ScenarioResult> scenario_suite(const Scorer& scorer,
                                           std::span<const ScenarioCase> cases,
                                           const Region& region,
                                           const SimConfig& sim,
                                           std::uint64_t seed,
                                           double spacing) {
  std::vector<ScenarioResult> results;
  results.reserve(cases.size());
  const Vec2 center = region.center();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const ScenarioCase& c = cases[i];
    if (!std::isfinite(c.dx) || !std::isfinite(c.dy) ||
        !std::isfinite(c.heading)) {
      throw std::invalid_argument("scenario_suite: non-finite geometry");
    }
    ScenarioResult r;
    r.scenario = c;
    r.tx = center + Vec2{c.dx / 2.0, c.dy / 2.0};
    const Pose2D rx(center - Vec2{c.dx / 2.0, c.dy / 2.0}, c.heading);
    RngStream rng(seed, stream_id(StreamKind::Scenario, i));
    r.obs = simulate_measurement(r.tx, rx, rng, sim);
    r.grid = heatmap(scorer, r.obs, region, spacing);
    results.push_back(std::move(r));
  }
  return results;
}

namespace {

void format_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

void write_heatmap_csv(const PosteriorGrid& grid, const std::string& path,
                       const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  if (!comment.empty()) out << "# " << comment << "\n";
  std::string line = "origin_x,origin_y,spacing,nx,ny\n";
  format_double(line, grid.origin.x);
  line += ",";
  format_double(line, grid.origin.y);
  line += ",";
  format_double(line, grid.spacing);
  line += "," + std::to_string(grid.nx) + "," + std::to_string(grid.ny) + "\n";
  out << line;
  for (int iy = 0; iy < grid.ny; ++iy) {
    line.clear();
    for (int ix = 0; ix < grid.nx; ++ix) {
      if (ix > 0) line += ",";
      format_double(line, grid.at(ix, iy));
    }
    line += "\n";
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_heatmap_ppm(const PosteriorGrid& grid, const std::string& path,
                       const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : grid.log_relative) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  out << "P6\n";
  if (!comment.empty()) out << "# " << comment << "\n";
  out << grid.nx << " " << grid.ny << "\n255\n";
  auto channel = [](double t) {
    return static_cast<unsigned char>(
        std::lround(255.0 * std::clamp(t, 0.0, 1.0)));
  };
  // Top image row corresponds to the largest y.
  for (int iy = grid.ny - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double t = (grid.at(ix, iy) - lo) / span;
      const unsigned char rgb[3] = {channel(3.0 * t), channel(3.0 * t - 1.0),
                                    channel(3.0 * t - 2.0)};
      out.write(reinterpret_cast<const char*>(rgb), 3);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace mccle
