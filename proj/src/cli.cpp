#include "mccle/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mccle/eval.hpp"
#include "mccle/hashing.hpp"
#include "mccle/models.hpp"
#include "mccle/rfsim.hpp"
#include "mccle/train.hpp"

namespace mccle {

namespace {

constexpr int kGeneratorVersion = 1;

struct SimFlags {
  int n_elements = 8;
  double spacing_wl = 0.5;
  double carrier_hz = 12e9;
  double beamwidth_deg = 65.0;
  double max_atten_db = 30.0;
  double snr0_db = 60.0;
  double pathloss_exp = 2.0;
  int mf_samples = 5;
  double angle_step_deg = 0.5;
  double bandwidth_hz = 200e6;
  bool no_noise = false;
  double min_sep = 1.0;
  std::vector<double> region = {0.0, 100.0, 0.0, 100.0};
};

void add_sim_flags(CLI::App* cmd, SimFlags& f) {
  cmd->add_option("--n-elements", f.n_elements, "Array elements");
  cmd->add_option("--spacing-wl", f.spacing_wl, "Element spacing, wavelengths");
  cmd->add_option("--carrier-hz", f.carrier_hz, "Carrier frequency, Hz");
  cmd->add_option("--beamwidth-deg", f.beamwidth_deg,
                  "Element 3 dB beamwidth, degrees");
  cmd->add_option("--max-atten-db", f.max_atten_db,
                  "Element front-to-back attenuation clamp, dB");
  cmd->add_option("--snr0-db", f.snr0_db, "Boresight SNR at 1 m, dB");
  cmd->add_option("--pathloss-exp", f.pathloss_exp, "Path loss exponent");
  cmd->add_option("--mf-samples", f.mf_samples, "Matched filter taps");
  cmd->add_option("--angle-step-deg", f.angle_step_deg,
                  "AoA search grid step, degrees");
  cmd->add_option("--bandwidth-hz", f.bandwidth_hz, "Signal bandwidth, Hz");
  cmd->add_flag("--no-noise", f.no_noise, "Disable receiver noise");
  cmd->add_option("--min-sep", f.min_sep, "Minimum TX-RX separation, m");
  cmd->add_option("--region", f.region,
                  "Scene rectangle: x_min x_max y_min y_max")
      ->expected(4);
}

SimConfig make_sim_config(const SimFlags& f) {
  SimConfig cfg;
  cfg.array.n_elements = f.n_elements;
  cfg.array.spacing_wavelengths = f.spacing_wl;
  cfg.array.carrier_hz = f.carrier_hz;
  cfg.pattern.beamwidth_3db = deg2rad(f.beamwidth_deg);
  cfg.pattern.max_attenuation_db = f.max_atten_db;
  cfg.link.snr0_db = f.snr0_db;
  cfg.link.pathloss_exponent = f.pathloss_exp;
  cfg.mf.n_samples = f.mf_samples;
  cfg.mf.angle_grid_step = deg2rad(f.angle_step_deg);
  cfg.mf.sample_period = 1.0 / f.bandwidth_hz;
  cfg.noise_enabled = !f.no_noise;
  cfg.min_separation_m = f.min_sep;
  return cfg;
}

Region make_region(const SimFlags& f) {
  Region r{f.region[0], f.region[1], f.region[2], f.region[3]};
  r.validate();
  return r;
}

std::string config_hash_of(const SimConfig& cfg, const Region& region) {
  return to_hex64(fnv1a64(sim_config_json(cfg, region)));
}

void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path parent =
      std::filesystem::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
}

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// ---------------------------------------------------------------- gen ----

struct GenOptions {
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out;
  SimFlags sim;
};

int cmd_gen(const GenOptions& opt) {
  const SimConfig cfg = make_sim_config(opt.sim);
  const Region region = make_region(opt.sim);
  const std::string hash = config_hash_of(cfg, region);
  const std::vector<Sample> samples =
      generate_dataset(opt.n, opt.seed, region, cfg, opt.workers);
  ensure_parent_dir(opt.out);
  try {
    write_dataset_jsonl(opt.out, samples, opt.seed, hash);
  } catch (const std::runtime_error& e) {
    throw CliError(2, e.what());
  }
  nlohmann::json meta = {{"generator_version", kGeneratorVersion},
                         {"seed", opt.seed},
                         {"n", opt.n},
                         {"config_hash", hash},
                         {"config", nlohmann::json::parse(
                                        sim_config_json(cfg, region))}};
  std::ofstream meta_out(opt.out + ".meta.json", std::ios::binary);
  if (!meta_out) throw CliError(2, "cannot write metadata: " + opt.out);
  meta_out << meta.dump(2) << "\n";
  if (!meta_out) throw CliError(2, "metadata write failed: " + opt.out);
  return 0;
}

// -------------------------------------------------------------- train ----

struct TrainOptions {
  std::string dataset;
  std::string model = "mccle";
  std::string out_dir = ".";
  TrainConfig cfg;
  bool lr_given = false;
  std::vector<double> region = {0.0, 100.0, 0.0, 100.0};
};

std::string train_config_hash(const TrainOptions& opt,
                              const std::string& dataset_hash,
                              const std::string& model) {
  nlohmann::json j = {{"dataset_hash", dataset_hash},
                      {"model", model},
                      {"k_candidates", opt.cfg.k_candidates},
                      {"epochs", opt.cfg.epochs},
                      {"learning_rate", opt.cfg.learning_rate},
                      {"weight_decay", opt.cfg.weight_decay},
                      {"batch_size", opt.cfg.batch_size},
                      {"split_fraction", opt.cfg.split_fraction},
                      {"seed", opt.cfg.seed}};
  return to_hex64(fnv1a64(j.dump()));
}

int cmd_train(TrainOptions opt) {
  DatasetFile data;
  try {
    data = read_dataset_jsonl(opt.dataset);
  } catch (const DatasetParseError& e) {
    throw CliError(3, e.what());
  } catch (const std::runtime_error& e) {
    throw CliError(3, e.what());
  }
  const ModelKind kind = model_kind_from_name(opt.model);
  if (!opt.lr_given) opt.cfg.learning_rate = default_learning_rate(kind);

  Region region{opt.region[0], opt.region[1], opt.region[2], opt.region[3]};
  region.validate();
  const TrainResult result = train(data.samples, kind, opt.cfg, region);

  std::error_code ec;
  std::filesystem::create_directories(opt.out_dir, ec);
  const std::string base = opt.out_dir + "/" + opt.model;
  CheckpointMeta meta;
  meta.seed = opt.cfg.seed;
  meta.config_hash = train_config_hash(opt, data.config_hash, opt.model);
  try {
    save_checkpoint(*result.best, base + "_checkpoint.json", meta);
  } catch (const CheckpointError& e) {
    throw CliError(2, e.what());
  }

  std::ofstream hist(base + "_history.csv", std::ios::binary);
  if (!hist) throw CliError(2, "cannot write history: " + base);
  hist << "# seed=" << opt.cfg.seed << " config_hash=" << meta.config_hash
       << "\n";
  hist << "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const EpochStats& s : result.history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", s.epoch, s.train_loss,
                  s.val_loss);
    hist << buf;
  }
  if (!hist) throw CliError(2, "history write failed: " + base);
  return 0;
}

// --------------------------------------------------------------- eval ----

struct EvalOptions {
  std::string dataset;
  std::string checkpoint;
  std::string model;  // optional consistency check
  std::string out = "metrics.json";
  bool uniform = false;
  std::uint64_t seed = 0;
  int workers = 0;
  double grid_spacing = 100.0 / 30.0;
  int k_random = 1000;
  std::vector<double> region = {0.0, 100.0, 0.0, 100.0};
};

std::unique_ptr<Scorer> load_model(const std::string& checkpoint, bool uniform,
                                   const std::string& expected_kind) {
  if (uniform) return make_scorer(ModelKind::Uniform, 0);
  std::unique_ptr<Scorer> scorer;
  try {
    scorer = load_checkpoint(checkpoint);
  } catch (const CheckpointError& e) {
    throw CliError(4, e.what());
  }
  if (!expected_kind.empty() &&
      model_kind_name(scorer->kind()) != expected_kind) {
    throw CliError(4, "checkpoint kind '" +
                          std::string(model_kind_name(scorer->kind())) +
                          "' does not match requested model '" +
                          expected_kind + "'");
  }
  return scorer;
}

nlohmann::json scheme_report(const Scorer& scorer,
                             std::span<const Sample> samples,
                             const EvalScheme& scheme, const Region& region,
                             std::uint64_t seed, int workers) {
  const double loss = eval_loss(scorer, samples, scheme, region, seed, workers);
  const int k = scheme.kind == EvalScheme::Kind::Grid
                    ? static_cast<int>(
                          grid_candidates(region, scheme.grid_spacing).size())
                    : scheme.k_random;
  const Metrics m = metrics(loss, k);
  const EntropyStats h =
      entropy_stats(scorer, samples, scheme, region, seed, workers);
  return {{"k", k},
          {"loss", loss},
          {"geometric_improvement", m.geometric_improvement},
          {"gap_closure_percent", m.gap_closure_percent},
          {"entropy_mean", h.mean},
          {"entropy_std", h.stddev}};
}

int cmd_eval(const EvalOptions& opt) {
  DatasetFile data;
  try {
    data = read_dataset_jsonl(opt.dataset);
  } catch (const DatasetParseError& e) {
    throw CliError(3, e.what());
  } catch (const std::runtime_error& e) {
    throw CliError(3, e.what());
  }
  if (data.samples.empty()) {
    throw CliError(3, "evaluation dataset is empty");
  }
  const auto scorer = load_model(opt.checkpoint, opt.uniform, opt.model);
  Region region{opt.region[0], opt.region[1], opt.region[2], opt.region[3]};
  region.validate();

  EvalScheme grid;
  grid.kind = EvalScheme::Kind::Grid;
  grid.grid_spacing = opt.grid_spacing;
  EvalScheme random;
  random.kind = EvalScheme::Kind::Random;
  random.k_random = opt.k_random;

  nlohmann::json report;
  report["model"] = std::string(model_kind_name(scorer->kind()));
  report["seed"] = opt.seed;
  report["dataset_config_hash"] = data.config_hash;
  report["n_eval"] = data.samples.size();
  report["grid"] = scheme_report(*scorer, data.samples, grid, region, opt.seed,
                                 opt.workers);
  report["random"] = scheme_report(*scorer, data.samples, random, region,
                                   opt.seed, opt.workers);

  ensure_parent_dir(opt.out);
  std::ofstream out(opt.out, std::ios::binary);
  if (!out) throw CliError(2, "cannot write metrics: " + opt.out);
  out << report.dump(2) << "\n";
  if (!out) throw CliError(2, "metrics write failed: " + opt.out);
  return 0;
}

// ------------------------------------------------------------ heatmap ----

struct HeatmapOptions {
  std::string checkpoint;
  std::string out_dir = ".";
  bool uniform = false;
  bool suite = false;
  bool ppm = false;
  std::optional<double> dx;
  std::optional<double> dy;
  std::optional<double> heading_deg;
  std::uint64_t seed = 0;
  double spacing = 100.0 / 30.0;
  SimFlags sim;
};

int cmd_heatmap(const HeatmapOptions& opt) {
  const auto scorer = load_model(opt.checkpoint, opt.uniform, "");
  const SimConfig cfg = make_sim_config(opt.sim);
  const Region region = make_region(opt.sim);

  std::vector<ScenarioCase> cases;
  if (opt.suite) {
    cases = reference_scenarios();
  } else {
    if (!opt.dx || !opt.dy || !opt.heading_deg) {
      throw CliError(5, "geometry requires --dx, --dy and --heading-deg "
                        "(or use --suite)");
    }
    if (!std::isfinite(*opt.dx) || !std::isfinite(*opt.dy) ||
        !std::isfinite(*opt.heading_deg)) {
      throw CliError(5, "geometry values must be finite");
    }
    cases.push_back({*opt.dx, *opt.dy, deg2rad(*opt.heading_deg)});
  }

  std::vector<ScenarioResult> results;
  try {
    results = scenario_suite(*scorer, cases, region, cfg, opt.seed,
                             opt.spacing);
  } catch (const std::invalid_argument& e) {
    throw CliError(5, e.what());
  }

  std::error_code ec;
  std::filesystem::create_directories(opt.out_dir, ec);
  const std::string model(model_kind_name(scorer->kind()));
  const std::string hash = config_hash_of(cfg, region);
  for (const ScenarioResult& r : results) {
    const std::string geo = "dx" + format_g(r.scenario.dx) + "_dy" +
                            format_g(r.scenario.dy) + "_h" +
                            format_g(rad2deg(r.scenario.heading));
    const std::string base = opt.out_dir + "/" + model + "_" + geo;
    const std::string comment = "seed=" + std::to_string(opt.seed) +
                                " config_hash=" + hash + " model=" + model +
                                " " + geo;
    try {
      write_heatmap_csv(r.grid, base + ".csv", comment);
      if (opt.ppm) write_heatmap_ppm(r.grid, base + ".ppm", comment);
    } catch (const std::runtime_error& e) {
      throw CliError(2, e.what());
    }
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{
      "Full-posterior wireless transmitter localization: measurement "
      "simulation, candidate-contrastive training, and evaluation"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen", "Generate a measurement dataset");
  gen_cmd->add_option("--n", gen.n, "Number of samples");
  gen_cmd->add_option("--seed", gen.seed, "Master seed")->envname("MCCLE_SEED");
  gen_cmd->add_option("--workers", gen.workers, "Worker threads (0 = auto)")
      ->envname("MCCLE_WORKERS");
  gen_cmd->add_option("--out", gen.out, "Output JSONL path")->required();
  add_sim_flags(gen_cmd, gen.sim);

  TrainOptions tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a scoring model");
  train_cmd->add_option("--dataset", tr.dataset, "Training dataset JSONL")
      ->required();
  train_cmd
      ->add_option("--model", tr.model,
                   "Model kind: mccle | gauss-cart | gauss-polar")
      ->check(CLI::IsMember({"mccle", "gauss-cart", "gauss-polar"}));
  train_cmd->add_option("--epochs", tr.cfg.epochs, "Training epochs");
  CLI::Option* lr_opt =
      train_cmd->add_option("--lr", tr.cfg.learning_rate,
                            "Learning rate (default depends on model)");
  train_cmd->add_option("--k-candidates", tr.cfg.k_candidates,
                        "Candidates per sample");
  train_cmd->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size");
  train_cmd->add_option("--weight-decay", tr.cfg.weight_decay,
                        "AdamW weight decay");
  train_cmd->add_option("--split", tr.cfg.split_fraction,
                        "Training fraction of the dataset");
  train_cmd->add_option("--seed", tr.cfg.seed, "Master seed")
      ->envname("MCCLE_SEED");
  train_cmd->add_option("--workers", tr.cfg.workers, "Worker threads")
      ->envname("MCCLE_WORKERS");
  train_cmd->add_option("--out", tr.out_dir, "Output directory");
  train_cmd
      ->add_option("--region", tr.region,
                   "Candidate-sampling rectangle: x_min x_max y_min y_max")
      ->expected(4);

  EvalOptions ev;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--dataset", ev.dataset, "Evaluation dataset JSONL")
      ->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint path");
  eval_cmd->add_option("--model", ev.model,
                       "Expected model kind (consistency check)");
  eval_cmd->add_flag("--uniform", ev.uniform, "Evaluate the uniform baseline");
  eval_cmd->add_option("--seed", ev.seed, "Master seed")
      ->envname("MCCLE_SEED");
  eval_cmd->add_option("--workers", ev.workers, "Worker threads")
      ->envname("MCCLE_WORKERS");
  eval_cmd->add_option("--grid-spacing", ev.grid_spacing,
                       "Grid scheme spacing, m");
  eval_cmd->add_option("--k-random", ev.k_random, "Random scheme candidates");
  eval_cmd->add_option("--region", ev.region,
                       "Scene rectangle: x_min x_max y_min y_max")
      ->expected(4);
  eval_cmd->add_option("--out", ev.out, "Metrics JSON path");

  HeatmapOptions hm;
  CLI::App* heat_cmd =
      app.add_subcommand("heatmap", "Render relative log-probability maps");
  heat_cmd->add_option("--checkpoint", hm.checkpoint, "Checkpoint path");
  heat_cmd->add_flag("--uniform", hm.uniform, "Use the uniform baseline");
  heat_cmd->add_flag("--suite", hm.suite, "Render the reference geometry suite");
  heat_cmd->add_flag("--ppm", hm.ppm, "Also write PPM renderings");
  double dx_val = 0, dy_val = 0, heading_val = 0;
  CLI::Option* dx_opt =
      heat_cmd->add_option("--dx", dx_val, "TX offset from RX along x, m");
  CLI::Option* dy_opt =
      heat_cmd->add_option("--dy", dy_val, "TX offset from RX along y, m");
  CLI::Option* heading_opt = heat_cmd->add_option(
      "--heading-deg", heading_val, "RX heading, degrees (0 = +x)");
  heat_cmd->add_option("--seed", hm.seed, "Master seed")
      ->envname("MCCLE_SEED");
  heat_cmd->add_option("--spacing", hm.spacing, "Heatmap grid spacing, m");
  heat_cmd->add_option("--out", hm.out_dir, "Output directory");
  add_sim_flags(heat_cmd, hm.sim);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (train_cmd->parsed()) {
      tr.lr_given = lr_opt->count() > 0;
      return cmd_train(tr);
    }
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (heat_cmd->parsed()) {
      if (dx_opt->count() > 0) hm.dx = dx_val;
      if (dy_opt->count() > 0) hm.dy = dy_val;
      if (heading_opt->count() > 0) hm.heading_deg = heading_val;
      return cmd_heatmap(hm);
    }
  } catch (const CliError& e) {
    std::cerr << "mccle: E" << e.code << ": " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "mccle: E1: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mccle
