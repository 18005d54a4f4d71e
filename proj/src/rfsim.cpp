#include "mccle/rfsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "mccle/parallel.hpp"

namespace mccle {

namespace {

// sin(phi) computed after folding into [-pi/2, pi/2], so that an angle and
// its fold image pi - phi map to the same argument and get bit-identical
// sines. The ULA mirror symmetry then holds exactly, not just to rounding.
double folded_sin(double phi) {
  phi = wrap_pi(phi);
  if (phi > kPi / 2) {
    phi = kPi - phi;
  } else if (phi < -kPi / 2) {
    phi = -kPi - phi;
  }
  return std::sin(phi);
}

// Unit-norm steering vector written into out[0..n). Element k carries phase
// 2*pi*spacing*k*sin(phi_local), built by incremental rotation.
void steering_into(double phi_local, const ArrayConfig& cfg,
                   std::complex<double>* out) {
  const int n = cfg.n_elements;
  const double phase_step =
      kTwoPi * cfg.spacing_wavelengths * folded_sin(phi_local);
  const std::complex<double> rot = std::polar(1.0, phase_step);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  std::complex<double> cur(scale, 0.0);
  for (int k = 0; k < n; ++k) {
    out[k] = cur;
    cur *= rot;
  }
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

}  // namespace

void SimConfig::validate() const {
  if (array.n_elements < 2) {
    throw std::invalid_argument("SimConfig: n_elements must be >= 2");
  }
  if (!(array.spacing_wavelengths > 0.0)) {
    throw std::invalid_argument("SimConfig: spacing must be positive");
  }
  if (!(pattern.beamwidth_3db > 0.0) || !(pattern.max_attenuation_db > 0.0)) {
    throw std::invalid_argument("SimConfig: invalid element pattern");
  }
  if (!std::isfinite(link.snr0_db) || !(link.pathloss_exponent > 0.0)) {
    throw std::invalid_argument("SimConfig: invalid link budget");
  }
  if (mf.n_samples < 1 || !(mf.sample_period > 0.0)) {
    throw std::invalid_argument("SimConfig: invalid matched filter config");
  }
  const double ratio = kTwoPi / mf.angle_grid_step;
  if (std::fabs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw std::invalid_argument(
        "SimConfig: angle grid step must divide 2*pi into an integer count");
  }
  if (!(min_separation_m > 0.0)) {
    throw std::invalid_argument("SimConfig: min separation must be positive");
  }
}

double element_gain(double phi_local, const ElementPattern& pattern) {
  const double ratio = wrap_pi(phi_local) / pattern.beamwidth_3db;
  const double atten_db =
      std::min(12.0 * ratio * ratio, pattern.max_attenuation_db);
  return std::pow(10.0, -atten_db / 20.0);
}

std::vector<std::complex<double>> array_response(double phi_local,
                                                 const ArrayConfig& cfg) {
  std::vector<std::complex<double>> a(static_cast<std::size_t>(cfg.n_elements));
  steering_into(phi_local, cfg, a.data());
  return a;
}

std::vector<std::vector<std::complex<double>>> matched_filter_snapshots(
    const Vec2& tx, const Pose2D& rx, RngStream& rng, const SimConfig& cfg) {
  const Vec2 diff = tx - rx.position;
  const double dist = diff.norm();
  const double phi_local = wrap_pi(diff.bearing() - rx.heading);

  const double snr_db =
      cfg.link.snr0_db - 10.0 * cfg.link.pathloss_exponent * std::log10(dist);
  const double gain_mag = std::pow(10.0, snr_db / 20.0);
  const double gain_phase = rng.uniform(0.0, kTwoPi);
  const std::complex<double> g = std::polar(gain_mag, gain_phase);
  const double tau = rng.uniform(0.0, cfg.mf.sample_period);

  const double b = element_gain(phi_local, cfg.pattern);
  const int n_elem = cfg.array.n_elements;
  std::vector<std::complex<double>> a(static_cast<std::size_t>(n_elem));
  steering_into(phi_local, cfg.array, a.data());

  const double noise_sigma = 1.0 / std::sqrt(2.0);  // unit complex variance
  std::vector<std::vector<std::complex<double>>> z(
      static_cast<std::size_t>(cfg.mf.n_samples));
  for (int n = 0; n < cfg.mf.n_samples; ++n) {
    const double frac =
        (tau - static_cast<double>(n) * cfg.mf.sample_period) /
        cfg.mf.sample_period;
    const std::complex<double> amp = g * (b * sinc(frac));
    auto& zn = z[static_cast<std::size_t>(n)];
    zn.resize(static_cast<std::size_t>(n_elem));
    for (int k = 0; k < n_elem; ++k) {
      zn[static_cast<std::size_t>(k)] = amp * a[static_cast<std::size_t>(k)];
      if (cfg.noise_enabled) {
        const double re = rng.normal() * noise_sigma;
        const double im = rng.normal() * noise_sigma;
        zn[static_cast<std::size_t>(k)] += std::complex<double>(re, im);
      }
    }
  }
  return z;
}

double beam_power(std::span<const std::complex<double>> snapshot,
                  double phi_local, const ArrayConfig& cfg) {
  const int n = cfg.n_elements;
  if (snapshot.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("beam_power: snapshot size mismatch");
  }
  std::vector<std::complex<double>> a(static_cast<std::size_t>(n));
  steering_into(phi_local, cfg, a.data());
  std::complex<double> acc(0.0, 0.0);
  for (int k = 0; k < n; ++k) {
    acc += std::conj(a[static_cast<std::size_t>(k)]) *
           snapshot[static_cast<std::size_t>(k)];
  }
  return std::norm(acc);
}

Observation simulate_measurement(const Vec2& tx, const Pose2D& rx,
                                 RngStream& rng, const SimConfig& cfg) {
  cfg.validate();
  const auto z = matched_filter_snapshots(tx, rx, rng, cfg);

  const int n_elem = cfg.array.n_elements;
  const int n_taps = cfg.mf.n_samples;
  const auto n_grid =
      static_cast<long>(std::llround(kTwoPi / cfg.mf.angle_grid_step));

  std::vector<std::complex<double>> a(static_cast<std::size_t>(n_elem));
  double best_power = -1.0;
  double best_angle = -kPi;
  for (long i = 0; i < n_grid; ++i) {
    const double phi_grid =
        -kPi + static_cast<double>(i) * cfg.mf.angle_grid_step;
    steering_into(wrap_pi(phi_grid - rx.heading), cfg.array, a.data());
    double power = 0.0;
    for (int n = 0; n < n_taps; ++n) {
      const auto& zn = z[static_cast<std::size_t>(n)];
      std::complex<double> acc(0.0, 0.0);
      for (int k = 0; k < n_elem; ++k) {
        acc += std::conj(a[static_cast<std::size_t>(k)]) *
               zn[static_cast<std::size_t>(k)];
      }
      power = std::max(power, std::norm(acc));
    }
    if (power > best_power) {  // strict: ties keep the lowest grid index
      best_power = power;
      best_angle = phi_grid;
    }
  }

  Observation obs;
  obs.rx = rx;
  obs.aoa_hat = best_angle;
  obs.snr_hat = best_power;
  return obs;
}

std::vector<Sample> generate_dataset(std::size_t n, std::uint64_t seed,
                                     const Region& region,
                                     const SimConfig& cfg, int workers) {
  region.validate();
  cfg.validate();
  std::vector<Sample> out(n);
  parallel_chunks(n, 64, workers,
                  [&](std::size_t begin, std::size_t end, std::size_t) {
                    for (std::size_t i = begin; i < end; ++i) {
                      RngStream geom_rng(seed, stream_id(StreamKind::Geometry, i));
                      GeometryDraw g = sample_geometry(geom_rng, region);
                      while ((g.tx - g.rx.position).norm() <
                             cfg.min_separation_m) {
                        g = sample_geometry(geom_rng, region);
                      }
                      RngStream meas_rng(seed,
                                         stream_id(StreamKind::Measurement, i));
                      out[i].tx = g.tx;
                      out[i].obs =
                          simulate_measurement(g.tx, g.rx, meas_rng, cfg);
                    }
                  });
  return out;
}

std::string sim_config_json(const SimConfig& cfg, const Region& region) {
  nlohmann::json j;
  j["array"] = {{"n_elements", cfg.array.n_elements},
                {"spacing_wavelengths", cfg.array.spacing_wavelengths},
                {"carrier_hz", cfg.array.carrier_hz}};
  j["pattern"] = {{"beamwidth_3db", cfg.pattern.beamwidth_3db},
                  {"max_attenuation_db", cfg.pattern.max_attenuation_db}};
  j["link"] = {{"snr0_db", cfg.link.snr0_db},
               {"pathloss_exponent", cfg.link.pathloss_exponent}};
  j["matched_filter"] = {{"n_samples", cfg.mf.n_samples},
                         {"angle_grid_step", cfg.mf.angle_grid_step},
                         {"sample_period", cfg.mf.sample_period}};
  j["noise_enabled"] = cfg.noise_enabled;
  j["min_separation_m"] = cfg.min_separation_m;
  j["region"] = {{"x_min", region.x_min},
                 {"x_max", region.x_max},
                 {"y_min", region.y_min},
                 {"y_max", region.y_max}};
  return j.dump();
}

DatasetParseError::DatasetParseError(std::size_t line_number,
                                     const std::string& what)
    : std::runtime_error("dataset line " + std::to_string(line_number) + ": " +
                         what),
      line(line_number) {}

void write_dataset_jsonl(const std::string& path,
                         std::span<const Sample> samples, std::uint64_t seed,
                         const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  nlohmann::json header = {{"format", "mccle-dataset"},
                           {"version", 1},
                           {"n", samples.size()},
                           {"seed", seed},
                           {"config_hash", config_hash}};
  out << header.dump() << "\n";
  for (const Sample& s : samples) {
    nlohmann::json j = {{"tx", {s.tx.x, s.tx.y}},
                        {"rx", {s.obs.rx.position.x, s.obs.rx.position.y}},
                        {"heading", s.obs.rx.heading},
                        {"aoa", s.obs.aoa_hat},
                        {"snr", s.obs.snr_hat}};
    out << j.dump() << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

DatasetFile read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open dataset: " + path);
  }
  DatasetFile file;
  std::string line;
  std::size_t line_no = 0;
  std::size_t declared_n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DatasetParseError(line_no, e.what());
    }
    try {
      if (line_no == 1) {
        if (j.at("format").get<std::string>() != "mccle-dataset" ||
            j.at("version").get<int>() != 1) {
          throw DatasetParseError(line_no, "unrecognized dataset header");
        }
        declared_n = j.at("n").get<std::size_t>();
        file.seed = j.at("seed").get<std::uint64_t>();
        file.config_hash = j.at("config_hash").get<std::string>();
        file.samples.reserve(declared_n);
        continue;
      }
      Sample s;
      s.tx = {j.at("tx").at(0).get<double>(), j.at("tx").at(1).get<double>()};
      const Vec2 rx_pos{j.at("rx").at(0).get<double>(),
                        j.at("rx").at(1).get<double>()};
      s.obs.rx = Pose2D(rx_pos, j.at("heading").get<double>());
      s.obs.aoa_hat = j.at("aoa").get<double>();
      s.obs.snr_hat = j.at("snr").get<double>();
      file.samples.push_back(s);
    } catch (const DatasetParseError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw DatasetParseError(line_no, e.what());
    }
  }
  if (line_no == 0) {
    throw DatasetParseError(1, "empty file (missing header)");
  }
  if (file.samples.size() != declared_n) {
    throw DatasetParseError(line_no,
                            "sample count does not match header 'n'");
  }
  return file;
}

}  // namespace mccle
