// Acceptance suite: numbered end-to-end checks, one PASS/FAIL line each.
// Run directly or through ctest; exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "mccle/eval.hpp"
#include "mccle/models.hpp"
#include "mccle/rfsim.hpp"
#include "mccle/train.hpp"
#include "testutil.hpp"

using namespace mccle;

namespace {

int g_failures = 0;
std::chrono::steady_clock::time_point g_t0;

void begin(int n, const char* title) {
  std::printf("criterion %d: %s\n", n, title);
  std::fflush(stdout);
  g_t0 = std::chrono::steady_clock::now();
}

void verdict(int n, bool pass, const std::string& details) {
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - g_t0)
          .count();
  std::printf("criterion %d: %s (%s) [%.1fs]\n", n, pass ? "PASS" : "FAIL",
              details.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---- criterion 1: metric consistency oracle ------------------------------

void criterion_1() {
  begin(1, "metric consistency against the reference loss table");
  struct Row {
    double loss;
    int k;
    double g, r;
  };
  const Row rows[] = {
      {-3.4703, 961, 32.15, 50.53},  {-2.3441, 961, 10.42, 34.13},
      {-1.6788, 961, 5.36, 24.44},   {-3.4259, 1000, 30.75, 49.59},
      {-1.6634, 1000, 5.28, 24.08},  {-2.3071, 1000, 10.05, 33.40},
  };
  bool pass = true;
  double worst_g = 0.0, worst_r = 0.0;
  for (const Row& row : rows) {
    const Metrics m = metrics(row.loss, row.k);
    worst_g = std::max(worst_g, std::fabs(m.geometric_improvement - row.g));
    worst_r = std::max(worst_r, std::fabs(m.gap_closure_percent - row.r));
    if (std::fabs(m.geometric_improvement - row.g) > 0.01) pass = false;
    if (std::fabs(m.gap_closure_percent - row.r) > 0.01) pass = false;
  }
  verdict(1, pass, fmt("max |dG|=%.4f, max |dR|=%.4f pp", worst_g, worst_r));
}

// ---- criterion 2: loss bounds --------------------------------------------

void criterion_2() {
  begin(2, "sampled-CEL bounds: -log K lower bound and constant-model zero");
  Region region;
  RngStream rng(7001, 0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const ModelKind kind = trial % 3 == 0   ? ModelKind::Mccle
                           : trial % 3 == 1 ? ModelKind::GaussCart
                                            : ModelKind::GaussPolar;
    auto scorer = make_scorer(kind, 7100 + trial);
    for (double& v : scorer->flat_params()) v *= rng.uniform(0.5, 4.0);
    const int k = 2 + static_cast<int>(rng.next_below(30));
    std::vector<Sample> batch(1);
    batch[0].tx = {rng.uniform(0, 100), rng.uniform(0, 100)};
    batch[0].obs = testutil::make_obs(
        {rng.uniform(0, 100), rng.uniform(0, 100)}, rng.uniform(-kPi, kPi),
        rng.uniform(-kPi, kPi), std::exp(rng.uniform(0.0, 13.0)));
    std::vector<CandidateSet> sets(1);
    sets[0] = sample_candidates(rng, batch[0].tx, k, region);
    const double loss = sampled_cel_loss(*scorer, batch, sets);
    if (!(loss >= -std::log(static_cast<double>(k)) - 1e-9)) ++violations;
  }

  auto uniform = make_scorer(ModelKind::Uniform, 0);
  double worst_const = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Sample> batch(4);
    std::vector<CandidateSet> sets(4);
    for (int i = 0; i < 4; ++i) {
      batch[i].tx = {rng.uniform(0, 100), rng.uniform(0, 100)};
      batch[i].obs = testutil::make_obs(
          {rng.uniform(0, 100), rng.uniform(0, 100)}, 0.1, 0.2, 55.0);
      sets[i] = sample_candidates(rng, batch[i].tx, 64, region);
    }
    worst_const = std::max(
        worst_const, std::fabs(sampled_cel_loss(*uniform, batch, sets)));
  }
  const bool pass = violations == 0 && worst_const <= 1e-12;
  verdict(2, pass,
          fmt("bound violations=%d/1000, max |constant-model loss|=%.2e",
              violations, worst_const));
}

// ---- criterion 3: gradient correctness ------------------------------------

void criterion_3() {
  begin(3, "score and sampled-CEL gradients vs central finite differences");
  Region region;
  std::size_t bad_coords = 0;
  double worst = 0.0;

  for (int trial = 0; trial < 50; ++trial) {  // score gradients
    const ModelKind kind = trial % 2 == 0 ? ModelKind::Mccle
                           : trial % 4 == 1 ? ModelKind::GaussCart
                                            : ModelKind::GaussPolar;
    auto scorer = make_scorer(kind, 7200 + trial);
    RngStream rng(7300, static_cast<std::uint64_t>(trial));
    const Observation obs = testutil::make_obs(
        {rng.uniform(0, 100), rng.uniform(0, 100)}, rng.uniform(-kPi, kPi),
        rng.uniform(-kPi, kPi), std::exp(rng.uniform(0.0, 13.0)));
    const Vec2 cand{rng.uniform(0, 100), rng.uniform(0, 100)};
    std::vector<double> analytic(scorer->param_count(), 0.0);
    const double w = 1.0;
    scorer->accumulate_score_grad(obs, {&cand, 1}, {&w, 1}, analytic);
    auto f = [&] { return scorer->score(cand, obs); };
    double w_err = 0.0;
    bad_coords += testutil::check_gradient(f, scorer->flat_params(), analytic,
                                           1e-5, 1e-4, &w_err);
    worst = std::max(worst, w_err);
  }

  for (int trial = 0; trial < 50; ++trial) {  // sampled-CEL gradients
    const ModelKind kind = trial % 3 == 0   ? ModelKind::Mccle
                           : trial % 3 == 1 ? ModelKind::GaussCart
                                            : ModelKind::GaussPolar;
    auto scorer = make_scorer(kind, 7400 + trial);
    RngStream rng(7500, static_cast<std::uint64_t>(trial));
    std::vector<Sample> batch(2);
    std::vector<CandidateSet> sets(2);
    for (int i = 0; i < 2; ++i) {
      batch[i].tx = {rng.uniform(0, 100), rng.uniform(0, 100)};
      batch[i].obs = testutil::make_obs(
          {rng.uniform(0, 100), rng.uniform(0, 100)}, rng.uniform(-kPi, kPi),
          rng.uniform(-kPi, kPi), std::exp(rng.uniform(0.0, 13.0)));
      sets[i] = sample_candidates(rng, batch[i].tx, 4, region);
    }
    const CelResult r = sampled_cel(*scorer, batch, sets);
    auto f = [&] { return sampled_cel_loss(*scorer, batch, sets); };
    double w_err = 0.0;
    bad_coords += testutil::check_gradient(f, scorer->flat_params(), r.grad,
                                           1e-5, 1e-4, &w_err);
    worst = std::max(worst, w_err);
  }
  verdict(3, bad_coords == 0,
          fmt("failing coordinates=%zu over 100 configs, worst rel err=%.2e",
              bad_coords, worst));
}

// ---- criterion 4: partition-estimate convergence ---------------------------

void criterion_4() {
  begin(4, "Monte-Carlo partition estimate vs 2-D quadrature at K=1e5");
  auto g = [](double x, double y) {
    const double dx = (x - 30.0) / 25.0;
    const double dy = (y - 70.0) / 25.0;
    return -0.5 * (dx * dx + dy * dy) + 0.4 * std::sin(x / 15.0) +
           0.3 * std::cos(y / 11.0);
  };
  Region region;
  const int nq = 1500;
  double quad = 0.0;
  for (int iy = 0; iy < nq; ++iy) {
    const double y = region.y_min + (iy + 0.5) * region.height() / nq;
    double row = 0.0;
    for (int ix = 0; ix < nq; ++ix) {
      const double x = region.x_min + (ix + 0.5) * region.width() / nq;
      row += std::exp(g(x, y));
    }
    quad += row;
  }
  quad /= static_cast<double>(nq) * nq;

  RngStream rng(7600, 0);
  const std::size_t k = 100000;
  double mc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mc += std::exp(g(rng.uniform(region.x_min, region.x_max),
                     rng.uniform(region.y_min, region.y_max)));
  }
  mc /= static_cast<double>(k);
  const double rel = std::fabs(mc - quad) / quad;
  verdict(4, rel < 0.01, fmt("relative error %.4f%% (MC=%.6f, quad=%.6f)",
                             100.0 * rel, mc, quad));
}

// ---- criterion 5: simulator physics ----------------------------------------

void criterion_5() {
  begin(5, "simulator physics: ambiguity, pattern, AoA accuracy, false alarms");
  bool pass = true;
  std::string notes;

  {  // (a) ULA mirror ambiguity to 1e-10
    ArrayConfig cfg;
    RngStream rng(7700, 0);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
      const double phi = rng.uniform(-kPi, kPi);
      const auto a = array_response(phi, cfg);
      const auto b = array_response(wrap_pi(kPi - phi), cfg);
      for (int k = 0; k < cfg.n_elements; ++k) {
        worst = std::max(worst, std::abs(a[k] - b[k]));
      }
    }
    if (worst > 1e-10) pass = false;
    notes += fmt("ambiguity err=%.1e; ", worst);
  }
  {  // (b) -3 dB at +-32.5 degrees exactly
    ElementPattern pattern;
    const double expected = std::pow(10.0, -3.0 / 20.0);
    const bool ok = element_gain(deg2rad(32.5), pattern) == expected &&
                    element_gain(-deg2rad(32.5), pattern) == expected;
    if (!ok) pass = false;
    notes += fmt("3dB point %s; ", ok ? "exact" : "WRONG");
  }
  {  // (c) noiseless AoA within one grid step at boresight
    SimConfig cfg;
    cfg.noise_enabled = false;
    const Pose2D rx({50.0, 50.0}, -kPi / 2.0);
    const Vec2 tx{50.0, 40.0};
    RngStream rng(7800, 0);
    const Observation obs = simulate_measurement(tx, rx, rng, cfg);
    const double err =
        std::fabs(wrap_pi(obs.aoa_hat - (tx - rx.position).bearing()));
    if (err > cfg.mf.angle_grid_step) pass = false;
    notes += fmt("boresight err=%.2e rad; ", err);
  }
  {  // (d) back-facing 100 m: > 20% gross AoA errors over 1e4 noisy trials
    SimConfig cfg;
    const Pose2D rx({50.0, 50.0}, 0.0);
    const Vec2 tx{-50.0, 50.0};
    const double true_phi = (tx - rx.position).bearing();
    int gross = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
      RngStream rng(7900, static_cast<std::uint64_t>(i));
      const Observation obs = simulate_measurement(tx, rx, rng, cfg);
      if (std::fabs(wrap_pi(obs.aoa_hat - true_phi)) > deg2rad(10.0)) ++gross;
    }
    const double frac = static_cast<double>(gross) / trials;
    if (!(frac > 0.2)) pass = false;
    notes += fmt("gross-error fraction=%.3f", frac);
  }
  verdict(5, pass, notes);
}

// ---- criteria 6-8: desk-scale training, posterior structure, entropy -------

struct DeskModels {
  std::unique_ptr<Scorer> mccle, gauss_cart, gauss_polar;
  std::vector<Sample> eval_set;
  Region region;
  SimConfig sim;
};

DeskModels train_desk_models() {
  DeskModels desk;
  std::fprintf(stderr, "[desk] generating datasets...\n");
  const auto train_set =
      generate_dataset(10000, 1001, desk.region, desk.sim, 0);
  desk.eval_set = generate_dataset(2000, 2002, desk.region, desk.sim, 0);

  TrainConfig cfg;
  cfg.k_candidates = 128;
  cfg.epochs = 200;
  cfg.batch_size = 256;
  cfg.weight_decay = 1e-4;
  cfg.split_fraction = 0.75;
  cfg.seed = 4242;
  cfg.workers = 0;

  const auto run = [&](ModelKind kind, const char* name) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig c = cfg;
    c.learning_rate = default_learning_rate(kind);
    TrainResult r = train(train_set, kind, c, desk.region);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::fprintf(stderr,
                 "[desk] %s: best epoch %d, best val loss %.4f (%.0fs)\n",
                 name, r.best_epoch,
                 r.best_epoch >= 1
                     ? r.history[static_cast<std::size_t>(r.best_epoch - 1)]
                           .val_loss
                     : 0.0,
                 secs);
    return std::move(r.best);
  };
  desk.mccle = run(ModelKind::Mccle, "mccle");
  desk.gauss_cart = run(ModelKind::GaussCart, "gauss-cart");
  desk.gauss_polar = run(ModelKind::GaussPolar, "gauss-polar");
  return desk;
}

void criterion_6(const DeskModels& desk) {
  begin(6, "desk-scale training ordering and gap closure");
  EvalScheme grid;
  EvalScheme random;
  random.kind = EvalScheme::Kind::Random;

  const auto eval_one = [&](const Scorer& s, const EvalScheme& scheme) {
    return eval_loss(s, desk.eval_set, scheme, desk.region, 3003, 0);
  };
  const double lg_m = eval_one(*desk.mccle, grid);
  const double lg_c = eval_one(*desk.gauss_cart, grid);
  const double lg_p = eval_one(*desk.gauss_polar, grid);
  const double lr_m = eval_one(*desk.mccle, random);
  const double lr_c = eval_one(*desk.gauss_cart, random);
  const double lr_p = eval_one(*desk.gauss_polar, random);

  const double r_grid = metrics(lg_m, 961).gap_closure_percent;
  const double r_rand = metrics(lr_m, 1000).gap_closure_percent;

  const bool ordering = lg_m < lg_c && lg_c < 0.0 && lg_m < lg_p &&
                        lr_m < lr_c && lr_c < 0.0 && lr_m < lr_p;
  const bool closure = r_grid >= 25.0 && r_rand >= 25.0;
  verdict(6, ordering && closure,
          fmt("grid L: mccle=%.4f gc=%.4f gp=%.4f | random L: mccle=%.4f "
              "gc=%.4f gp=%.4f | R: grid=%.2f%% random=%.2f%%",
              lg_m, lg_c, lg_p, lr_m, lr_c, lr_p, r_grid, r_rand));
}

double grid_entropy(const PosteriorGrid& grid) {
  const double log_k = std::log(static_cast<double>(grid.log_relative.size()));
  double h = 0.0;
  for (double l : grid.log_relative) {
    const double p = std::exp(l - log_k);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void criterion_7(const DeskModels& desk) {
  begin(7, "posterior structure: front-facing geometries concentrate");
  const auto cases = reference_scenarios();  // rows: dy=10 then dy=50
  const int n_seeds = 20;

  std::vector<double> mean_entropy(cases.size(), 0.0);
  std::vector<double> mean_bearing_err(cases.size(), 0.0);
  for (int s = 0; s < n_seeds; ++s) {
    const auto results = scenario_suite(*desk.mccle, cases, desk.region,
                                        desk.sim, 5000 + s);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      mean_entropy[i] += grid_entropy(r.grid);
      // bearing from the receiver to the heatmap argmax vs to the truth
      std::size_t best = 0;
      for (std::size_t j = 1; j < r.grid.log_relative.size(); ++j) {
        if (r.grid.log_relative[j] > r.grid.log_relative[best]) best = j;
      }
      const int ix = static_cast<int>(best) % r.grid.nx;
      const int iy = static_cast<int>(best) / r.grid.nx;
      const Vec2 peak = r.grid.point(ix, iy);
      const double err = angle_distance(
          (peak - r.obs.rx.position).bearing(),
          (r.tx - r.obs.rx.position).bearing());
      mean_bearing_err[i] += err;
    }
  }
  for (double& v : mean_entropy) v /= n_seeds;
  for (double& v : mean_bearing_err) v /= n_seeds;

  // per row: every front dx beats every back dx on mean entropy
  bool entropy_ok = true;
  for (int row = 0; row < 2; ++row) {
    const std::size_t base = static_cast<std::size_t>(row) * 5;
    for (std::size_t f : {base + 3, base + 4}) {    // dx = 50, 80
      for (std::size_t b : {base + 0, base + 1}) {  // dx = -80, -50
        if (!(mean_entropy[f] < mean_entropy[b])) entropy_ok = false;
      }
    }
  }
  bool bearing_ok = true;
  double worst_bearing = 0.0;
  for (int row = 0; row < 2; ++row) {
    const std::size_t base = static_cast<std::size_t>(row) * 5;
    for (std::size_t f : {base + 3, base + 4}) {
      worst_bearing = std::max(worst_bearing, mean_bearing_err[f]);
      if (!(mean_bearing_err[f] <= deg2rad(15.0))) bearing_ok = false;
    }
  }
  verdict(7, entropy_ok && bearing_ok,
          fmt("entropy front/back: dy10 {%.2f %.2f | %.2f %.2f} dy50 "
              "{%.2f %.2f | %.2f %.2f}; worst front bearing err=%.1f deg",
              mean_entropy[3], mean_entropy[4], mean_entropy[0],
              mean_entropy[1], mean_entropy[8], mean_entropy[9],
              mean_entropy[5], mean_entropy[6], rad2deg(worst_bearing)));
}

void criterion_8(const DeskModels& desk) {
  begin(8, "entropy ordering across models on the evaluation set");
  EvalScheme grid;
  const EntropyStats h_m =
      entropy_stats(*desk.mccle, desk.eval_set, grid, desk.region, 3003, 0);
  const EntropyStats h_c = entropy_stats(*desk.gauss_cart, desk.eval_set,
                                         grid, desk.region, 3003, 0);
  const EntropyStats h_p = entropy_stats(*desk.gauss_polar, desk.eval_set,
                                         grid, desk.region, 3003, 0);
  const bool pass = h_m.mean < h_c.mean && h_m.mean < h_p.mean;
  verdict(8, pass,
          fmt("mean entropy: mccle=%.3f gauss-cart=%.3f gauss-polar=%.3f",
              h_m.mean, h_c.mean, h_p.mean));
}

// ---- criterion 9: CLI reproducibility --------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void criterion_9() {
  begin(9, "CLI subcommands are byte-identical across repeated seeded runs");
  const std::string cli = MCCLE_CLI_PATH;
  const std::string work = "acceptance_cli";
  std::filesystem::remove_all(work);
  std::filesystem::create_directories(work);
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
  };

  bool pass = true;
  std::string notes;
  // gen
  pass &= run("gen --n 80 --seed 5 --out " + work + "/a.jsonl") == 0;
  pass &= run("gen --n 80 --seed 5 --out " + work + "/b.jsonl") == 0;
  const bool gen_ok =
      pass && slurp(work + "/a.jsonl") == slurp(work + "/b.jsonl");
  notes += fmt("gen %s; ", gen_ok ? "ok" : "MISMATCH");
  pass &= gen_ok;

  // train (including a worker-count change)
  const std::string t =
      "train --dataset " + work +
      "/a.jsonl --model mccle --epochs 2 --k-candidates 8 --batch-size 16 "
      "--seed 9";
  pass &= run(t + " --workers 1 --out " + work + "/t1") == 0;
  pass &= run(t + " --workers 2 --out " + work + "/t2") == 0;
  const bool train_ok = pass && slurp(work + "/t1/mccle_checkpoint.json") ==
                                    slurp(work + "/t2/mccle_checkpoint.json") &&
                        slurp(work + "/t1/mccle_history.csv") ==
                            slurp(work + "/t2/mccle_history.csv");
  notes += fmt("train %s; ", train_ok ? "ok" : "MISMATCH");
  pass &= train_ok;

  // eval
  const std::string e = "eval --dataset " + work + "/a.jsonl --checkpoint " +
                        work + "/t1/mccle_checkpoint.json --seed 9";
  pass &= run(e + " --out " + work + "/m1.json") == 0;
  pass &= run(e + " --workers 2 --out " + work + "/m2.json") == 0;
  const bool eval_ok =
      pass && slurp(work + "/m1.json") == slurp(work + "/m2.json");
  notes += fmt("eval %s; ", eval_ok ? "ok" : "MISMATCH");
  pass &= eval_ok;

  // heatmap
  const std::string h = "heatmap --checkpoint " + work +
                        "/t1/mccle_checkpoint.json --dx 50 --dy 10 "
                        "--heading-deg 0 --seed 9 --ppm";
  pass &= run(h + " --out " + work + "/h1") == 0;
  pass &= run(h + " --out " + work + "/h2") == 0;
  const bool heat_ok =
      pass && slurp(work + "/h1/mccle_dx50_dy10_h0.csv") ==
                  slurp(work + "/h2/mccle_dx50_dy10_h0.csv") &&
      slurp(work + "/h1/mccle_dx50_dy10_h0.ppm") ==
          slurp(work + "/h2/mccle_dx50_dy10_h0.ppm");
  notes += fmt("heatmap %s", heat_ok ? "ok" : "MISMATCH");
  pass &= heat_ok;

  verdict(9, pass, notes);
}

}  // namespace

int main() {
  std::printf("acceptance suite (desk scale)\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  const DeskModels desk = train_desk_models();
  criterion_6(desk);
  criterion_7(desk);
  criterion_8(desk);
  criterion_9();
  std::printf("acceptance: %d of 9 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
