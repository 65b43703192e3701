#pragma once

// Run configuration: a plain-text key-value file (one "key = value" per line,
// '#' starts a comment) so experiment records stay diff-able. Command-line
// flags override file values; validation rejects every invariant violation
// before any compute starts.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cscnet/model.hpp"

namespace cscnet {

struct RunConfig {
  // model
  std::size_t d_x = 32, d = 16, d_v = 16, d_c = 16, hidden = 16;
  std::string primitive_classifier = "parametric";
  std::string composition_classifier = "nonparametric";
  // training
  double alpha = 4.0;
  double lr = 5e-5;
  double temperature = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::string profile = "f64";  // f64 | f32
  bool branch_a2o = true, branch_o2a = true, branch_composition = true;
  bool teacher_forcing = false;
  bool positive_only_loss = false;
  // inference / evaluation
  double beta = 0.1;
  std::size_t n_biases = 50;
  std::vector<double> betas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::size_t ablate_seeds = 3;
  // data
  std::string data = "synth";  // synth | files
  std::size_t n_attrs = 5, n_objs = 5, samples_per_pair = 30;
  double seen_fraction = 0.8, noise_sigma = 0.1, entanglement = 0.5;
  // paths
  std::string embeddings, features, labels, checkpoint;
  std::string out = ".";
  // grad-check
  double grad_check_step = 1e-5;
  double grad_check_tol = 1e-4;
  std::string corrupt_block;  // harness self-test hook

  ModelDims model_dims() const { return {d_x, d, d_v, d_c, hidden}; }
  SynthSpec synth_spec() const {
    return {n_attrs, n_objs, d_x, samples_per_pair, seen_fraction, noise_sigma, entanglement, seed};
  }
  LossOptions loss_options() const {
    return {alpha,          branch_a2o,       branch_o2a, branch_composition,
            teacher_forcing, positive_only_loss, temperature};
  }
  InferenceOptions inference_options() const {
    return {beta, temperature, branch_a2o, branch_o2a, branch_composition};
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::runtime_error("config: key '" + key + "' expects true/false, got '" + value + "'");
}

inline double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' expects a number, got '" + value + "'");
  }
  if (pos != value.size()) {
    throw std::runtime_error("config: key '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' expects an unsigned integer, got '" + value + "'");
  }
  if (pos != value.size()) {
    throw std::runtime_error("config: key '" + key + "' expects an unsigned integer, got '" + value + "'");
  }
  return v;
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::string item;
  std::istringstream ss(value);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw std::runtime_error("config: key '" + key + "' expects a comma-separated list");
  return out;
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_u64;
  if (key == "d_x") cfg.d_x = parse_u64(key, value);
  else if (key == "d") cfg.d = parse_u64(key, value);
  else if (key == "d_v") cfg.d_v = parse_u64(key, value);
  else if (key == "d_c") cfg.d_c = parse_u64(key, value);
  else if (key == "hidden") cfg.hidden = parse_u64(key, value);
  else if (key == "primitive_classifier") cfg.primitive_classifier = value;
  else if (key == "composition_classifier") cfg.composition_classifier = value;
  else if (key == "alpha") cfg.alpha = parse_double(key, value);
  else if (key == "beta") cfg.beta = parse_double(key, value);
  else if (key == "lr") cfg.lr = parse_double(key, value);
  else if (key == "temperature") cfg.temperature = parse_double(key, value);
  else if (key == "epochs") cfg.epochs = parse_u64(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_u64(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "profile") cfg.profile = value;
  else if (key == "branch_a2o") cfg.branch_a2o = parse_bool(key, value);
  else if (key == "branch_o2a") cfg.branch_o2a = parse_bool(key, value);
  else if (key == "branch_composition") cfg.branch_composition = parse_bool(key, value);
  else if (key == "teacher_forcing") cfg.teacher_forcing = parse_bool(key, value);
  else if (key == "positive_only_loss") cfg.positive_only_loss = parse_bool(key, value);
  else if (key == "n_biases") cfg.n_biases = parse_u64(key, value);
  else if (key == "betas") cfg.betas = detail::parse_double_list(key, value);
  else if (key == "ablate_seeds") cfg.ablate_seeds = parse_u64(key, value);
  else if (key == "data") cfg.data = value;
  else if (key == "n_attrs") cfg.n_attrs = parse_u64(key, value);
  else if (key == "n_objs") cfg.n_objs = parse_u64(key, value);
  else if (key == "samples_per_pair") cfg.samples_per_pair = parse_u64(key, value);
  else if (key == "seen_fraction") cfg.seen_fraction = parse_double(key, value);
  else if (key == "noise_sigma") cfg.noise_sigma = parse_double(key, value);
  else if (key == "entanglement") cfg.entanglement = parse_double(key, value);
  else if (key == "embeddings") cfg.embeddings = value;
  else if (key == "features") cfg.features = value;
  else if (key == "labels") cfg.labels = value;
  else if (key == "checkpoint") cfg.checkpoint = value;
  else if (key == "out") cfg.out = value;
  else if (key == "grad_check_step") cfg.grad_check_step = parse_double(key, value);
  else if (key == "grad_check_tol") cfg.grad_check_tol = parse_double(key, value);
  else if (key == "corrupt_block") cfg.corrupt_block = value;
  else throw std::runtime_error("config: unknown key '" + key + "'");
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: line " + std::to_string(line_no) + " is not 'key = value'");
    }
    apply_config_entry(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
  if (cfg.profile != "f64" && cfg.profile != "f32") fail("profile must be f64 or f32");
  if (cfg.d_x == 0 || cfg.d == 0 || cfg.d_v == 0 || cfg.d_c == 0 || cfg.hidden == 0) {
    fail("all dimensions must be positive");
  }
  classifier_kind_from_string(cfg.primitive_classifier);
  classifier_kind_from_string(cfg.composition_classifier);
  if (cfg.primitive_classifier == "nonparametric" && cfg.d_v != cfg.d) {
    fail("nonparametric primitive classification requires d_v == d");
  }
  if (!cfg.branch_a2o && !cfg.branch_o2a && !cfg.branch_composition) {
    fail("at least one branch must be enabled");
  }
  if (!(cfg.alpha >= 0.0)) fail("alpha must be >= 0");
  if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0)) fail("beta must lie in [0,1]");
  if (!cfg.branch_composition && cfg.beta != 1.0) {
    fail("with the composition branch disabled beta must be 1");
  }
  if (cfg.alpha == 0.0 && !cfg.branch_composition) {
    fail("alpha = 0 with the composition branch disabled leaves no loss");
  }
  if (!(cfg.lr > 0.0)) fail("lr must be positive");
  if (!(cfg.temperature > 0.0)) fail("temperature must be positive");
  if (cfg.epochs == 0) fail("epochs must be at least 1");
  if (cfg.batch_size == 0) fail("batch_size must be at least 1");
  if (cfg.n_biases < 2) fail("n_biases must be at least 2");
  for (double b : cfg.betas) {
    if (!(b >= 0.0 && b <= 1.0)) fail("betas entries must lie in [0,1]");
  }
  if (cfg.ablate_seeds == 0) fail("ablate_seeds must be at least 1");
  if (cfg.data != "synth" && cfg.data != "files") fail("data must be synth or files");
  if (cfg.data == "synth") {
    if (cfg.n_attrs < 2 || cfg.n_objs < 2) fail("synthetic data needs at least 2 attributes and 2 objects");
    if (cfg.samples_per_pair < 2) fail("samples_per_pair must be at least 2");
    if (!(cfg.seen_fraction > 0.0 && cfg.seen_fraction < 1.0)) fail("seen_fraction must lie in (0,1)");
    if (cfg.noise_sigma < 0.0) fail("noise_sigma must be >= 0");
    if (cfg.entanglement < 0.0 || cfg.entanglement > 1.0) fail("entanglement must lie in [0,1]");
    if (cfg.d < 2) fail("synthetic embeddings need d >= 2");
  } else {
    if (cfg.embeddings.empty()) fail("data = files requires an embeddings path");
    if (cfg.features.empty()) fail("data = files requires a features path");
    if (cfg.labels.empty()) fail("data = files requires a labels path");
  }
}

}  // namespace cscnet
