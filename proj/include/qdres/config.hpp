#pragma once
// Sweep configuration: defaults, JSON round trip, validation and a digest
// of everything that affects numerical output.

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qdres/cache.hpp"
#include "qdres/error.hpp"
#include "qdres/util.hpp"

namespace qdres {

struct SweepConfig {
  double V0 = 5.0;
  int N = 14;
  double alpha = 2.0;  // basis for spectra, detectors and complex scaling
  double alpha_min = 2.0, alpha_max = 6.0;
  int alpha_points = 40;
  double lambda_min = 1.5, lambda_max = 3.0, lambda_step = 0.005;
  std::vector<double> thetas = {std::numbers::pi / 40, std::numbers::pi / 30, std::numbers::pi / 20,
                                std::numbers::pi / 10, std::numbers::pi / 5};
  double reference_theta = std::numbers::pi / 10;
  std::vector<double> table_lambdas = {1.755, 1.8625, 2.02, 2.255, 2.61};
  double dos_lambda = 2.25;
  double branch_lambda_step = 0.05;

  // tolerances
  double overlap_cutoff = 1e-12;
  int levels = 10;             // eigenvectors kept per lambda slice
  int dos_max_level = 8;
  int fit_max_iterations = 200;
  double fit_step_tolerance = 1e-10;
  double fidelity_delta = 0.0;  // 0: one lambda step
  double peak_floor = 1e-4;
  double do_margin = 0.5;
  double do_max_anchor_overlap = 0.1;
  double imag_slack = 2e-3;
  double imag_floor = -0.25;
  double speed_floor = 0.2;
  double lambda_rep_threshold = 1e-3;

  // run environment; not part of the digest
  std::string output_dir = "out";
  std::string cache_dir = "cache";
  unsigned workers = 0;

  std::vector<double> alphas() const { return linspace(alpha_min, alpha_max, alpha_points); }
  std::vector<double> lambdas() const { return arange_inclusive(lambda_min, lambda_max, lambda_step); }
  std::vector<double> branch_lambdas() const {
    return arange_inclusive(lambda_min, lambda_max, std::max(branch_lambda_step, lambda_step));
  }

  /// Position of reference_theta in thetas, or -1.
  int reference_theta_index() const {
    for (std::size_t i = 0; i < thetas.size(); ++i)
      if (std::abs(thetas[i] - reference_theta) < 1e-12) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
    if (!(V0 > 0.0)) bad("V0 must be > 0");
    if (N < 0 || N > kDefaultMaxN) bad("N out of range");
    if (!(alpha > 0.0)) bad("alpha must be > 0");
    if (!(alpha_min > 0.0 && alpha_max > alpha_min) || alpha_points < 3) bad("alpha grid needs >= 3 increasing points");
    if (!(lambda_min >= 0.0 && lambda_max > lambda_min && lambda_step > 0.0)) bad("bad lambda grid");
    if (thetas.empty() || !strictly_increasing(thetas)) bad("theta list must be non-empty and increasing");
    for (double t : thetas)
      if (!(t > 0.0 && t < std::numbers::pi / 4)) bad("theta values must lie in (0, pi/4)");
    if (reference_theta_index() < 0) bad("reference_theta must be one of the thetas");
    if (table_lambdas.empty() || !strictly_increasing(table_lambdas)) bad("table lambdas must be increasing");
    if (!(overlap_cutoff > 0.0 && overlap_cutoff < 1.0)) bad("overlap_cutoff must lie in (0, 1)");
    if (levels < 8) bad("levels must be >= 8");
    if (dos_max_level < 1) bad("dos_max_level must be >= 1");
    if (fit_max_iterations < 1 || !(fit_step_tolerance > 0.0)) bad("bad fit options");
    if (fidelity_delta < 0.0 || !(peak_floor >= 0.0) || !(do_margin >= 0.0)) bad("bad detector options");
    if (!(branch_lambda_step > 0.0)) bad("branch_lambda_step must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const SweepConfig& c) {
  j = nlohmann::json{{"V0", c.V0},
                     {"N", c.N},
                     {"alpha", c.alpha},
                     {"alpha_min", c.alpha_min},
                     {"alpha_max", c.alpha_max},
                     {"alpha_points", c.alpha_points},
                     {"lambda_min", c.lambda_min},
                     {"lambda_max", c.lambda_max},
                     {"lambda_step", c.lambda_step},
                     {"thetas", c.thetas},
                     {"reference_theta", c.reference_theta},
                     {"table_lambdas", c.table_lambdas},
                     {"dos_lambda", c.dos_lambda},
                     {"branch_lambda_step", c.branch_lambda_step},
                     {"overlap_cutoff", c.overlap_cutoff},
                     {"levels", c.levels},
                     {"dos_max_level", c.dos_max_level},
                     {"fit_max_iterations", c.fit_max_iterations},
                     {"fit_step_tolerance", c.fit_step_tolerance},
                     {"fidelity_delta", c.fidelity_delta},
                     {"peak_floor", c.peak_floor},
                     {"do_margin", c.do_margin},
                     {"do_max_anchor_overlap", c.do_max_anchor_overlap},
                     {"imag_slack", c.imag_slack},
                     {"imag_floor", c.imag_floor},
                     {"speed_floor", c.speed_floor},
                     {"lambda_rep_threshold", c.lambda_rep_threshold},
                     {"output_dir", c.output_dir},
                     {"cache_dir", c.cache_dir},
                     {"workers", c.workers}};
}

/// Overlay the keys present in j onto c. Unknown keys are rejected so that
/// a misspelt option does not silently fall back to its default.
inline void apply_json(SweepConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
  nlohmann::json current;
  to_json(current, c);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!current.contains(it.key())) throw Error(ErrorKind::InvalidArgument, "unknown config key: " + it.key());
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        j.at(key).get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("config key ") + key + ": " + e.what());
      }
    }
  };
  get("V0", c.V0);
  get("N", c.N);
  get("alpha", c.alpha);
  get("alpha_min", c.alpha_min);
  get("alpha_max", c.alpha_max);
  get("alpha_points", c.alpha_points);
  get("lambda_min", c.lambda_min);
  get("lambda_max", c.lambda_max);
  get("lambda_step", c.lambda_step);
  get("thetas", c.thetas);
  get("reference_theta", c.reference_theta);
  get("table_lambdas", c.table_lambdas);
  get("dos_lambda", c.dos_lambda);
  get("branch_lambda_step", c.branch_lambda_step);
  get("overlap_cutoff", c.overlap_cutoff);
  get("levels", c.levels);
  get("dos_max_level", c.dos_max_level);
  get("fit_max_iterations", c.fit_max_iterations);
  get("fit_step_tolerance", c.fit_step_tolerance);
  get("fidelity_delta", c.fidelity_delta);
  get("peak_floor", c.peak_floor);
  get("do_margin", c.do_margin);
  get("do_max_anchor_overlap", c.do_max_anchor_overlap);
  get("imag_slack", c.imag_slack);
  get("imag_floor", c.imag_floor);
  get("speed_floor", c.speed_floor);
  get("lambda_rep_threshold", c.lambda_rep_threshold);
  get("output_dir", c.output_dir);
  get("cache_dir", c.cache_dir);
  get("workers", c.workers);
}

inline void apply_config_file(SweepConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "config file " + path + ": " + e.what());
  }
  apply_json(c, j);
}

/// Digest of the numerically relevant fields (directories and worker count
/// excluded). Doubles enter as hex floats.
inline std::string config_hash(const SweepConfig& c) {
  nlohmann::json j;
  to_json(j, c);
  j.erase("output_dir");
  j.erase("cache_dir");
  j.erase("workers");
  std::string text;
  for (auto it = j.begin(); it != j.end(); ++it) {
    text += it.key() + "=";
    if (it->is_array()) {
      for (const auto& v : *it) text += (v.is_number_float() ? hexfloat(v.get<double>()) : v.dump()) + ",";
    } else if (it->is_number_float()) {
      text += hexfloat(it->get<double>());
    } else {
      text += it->dump();
    }
    text += ";";
  }
  text += "format=" + std::to_string(kCacheFormatVersion);
  return sha256_hex(text).substr(0, 16);
}

}  // namespace qdres
