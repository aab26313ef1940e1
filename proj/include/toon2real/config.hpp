#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>

#include "toon2real/error.hpp"
#include "toon2real/models.hpp"

namespace toon2real {

enum class TrainMode { Paired, Unpaired };

inline std::string mode_name(TrainMode m) { return m == TrainMode::Paired ? "paired" : "unpaired"; }

/// Optimization and architecture settings for one training run. Defaults are
/// the standard pix2pix setup (Adam 2e-4, beta1 0.5, L1 weight 100) with
/// beta2 = 0.9999.
struct TrainConfig {
  std::size_t batch_size = 1;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  double lambda_l1 = 100.0;
  std::size_t epochs = 200;
  TrainMode mode = TrainMode::Paired;
  double lambda_cycle = 10.0;
  std::uint64_t seed = 0;
  std::size_t lr_constant_epochs = 100;
  std::size_t lr_decay_epochs = 100;
  std::size_t image_size = 256;
  std::size_t ngf = 64;
  std::size_t ndf = 64;
  std::size_t d_layers = 3;
  bool jitter = true;
  bool dropout = true;
  std::size_t checkpoint_every = 20;
  std::size_t eval_every = 0;

  std::size_t unet_depth() const {
    std::size_t d = 0;
    while ((std::size_t{1} << d) < image_size) ++d;
    return d;
  }

  models::GeneratorSpec generator_spec() const {
    models::GeneratorSpec g;
    g.depth = unet_depth();
    g.ngf = ngf;
    g.noise_mode = dropout ? models::NoiseMode::Dropout : models::NoiseMode::None;
    return g;
  }

  models::DiscriminatorSpec discriminator_spec() const {
    return {mode == TrainMode::Paired ? std::size_t{6} : std::size_t{3}, ndf, d_layers};
  }

  /// Constant for lr_constant_epochs, then linear decay towards zero over
  /// lr_decay_epochs. `epoch` is zero-based.
  double lr_at_epoch(std::size_t epoch) const {
    if (lr_decay_epochs == 0 || epoch <= lr_constant_epochs) return lr;
    const double past = static_cast<double>(epoch - lr_constant_epochs);
    return lr * std::max(0.0, 1.0 - past / static_cast<double>(lr_decay_epochs));
  }

  void validate() const {
    auto bad = [](const std::string& m) { fail(ErrorCategory::ConfigError, m); };
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (lr < 0) bad("lr must be >= 0");
    if (beta1 < 0 || beta1 >= 1) bad("beta1 must be in [0, 1)");
    if (beta2 < 0 || beta2 >= 1) bad("beta2 must be in [0, 1)");
    if (epsilon <= 0) bad("epsilon must be > 0");
    if (weight_decay < 0) bad("weight_decay must be >= 0");
    if (lambda_l1 < 0) bad("lambda_l1 must be >= 0");
    if (lambda_cycle < 0) bad("lambda_cycle must be >= 0");
    if (epochs < 1) bad("epochs must be >= 1");
    if (ngf < 1 || ndf < 1) bad("ngf and ndf must be >= 1");
    if (d_layers < 1) bad("d_layers must be >= 1");
    if (image_size < 4 || (image_size & (image_size - 1)) != 0) bad("image_size must be a power of two >= 4");
    if (!discriminator_spec().accepts(image_size)) bad("image_size too small for d_layers");
    if (checkpoint_every < 1) bad("checkpoint_every must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) fail(ErrorCategory::ConfigError, "'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(ErrorCategory::ConfigError, "'" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(ErrorCategory::ConfigError, "'" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

/// Apply `key: value` lines over `base`. Blank lines and `#` comments are
/// ignored; unknown or repeated keys are errors.
inline TrainConfig parse_config_text(const std::string& text, TrainConfig base = {}) {
  using namespace detail;
  TrainConfig c = base;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      fail(ErrorCategory::ConfigError, "line " + std::to_string(lineno) + ": expected 'key: value'");
    }
    const std::string key = trim(line.substr(0, colon)), value = trim(line.substr(colon + 1));
    if (!seen.insert(key).second) fail(ErrorCategory::ConfigError, "duplicate key '" + key + "'");
    if (key == "batch_size") c.batch_size = parse_int<std::size_t>(key, value);
    else if (key == "lr") c.lr = parse_real(key, value);
    else if (key == "beta1") c.beta1 = parse_real(key, value);
    else if (key == "beta2") c.beta2 = parse_real(key, value);
    else if (key == "epsilon") c.epsilon = parse_real(key, value);
    else if (key == "weight_decay") c.weight_decay = parse_real(key, value);
    else if (key == "lambda_l1") c.lambda_l1 = parse_real(key, value);
    else if (key == "epochs") c.epochs = parse_int<std::size_t>(key, value);
    else if (key == "mode") {
      if (value == "paired") c.mode = TrainMode::Paired;
      else if (value == "unpaired") c.mode = TrainMode::Unpaired;
      else fail(ErrorCategory::ConfigError, "'mode' expects paired or unpaired, got '" + value + "'");
    }
    else if (key == "lambda_cycle") c.lambda_cycle = parse_real(key, value);
    else if (key == "seed") c.seed = parse_int<std::uint64_t>(key, value);
    else if (key == "lr_constant_epochs") c.lr_constant_epochs = parse_int<std::size_t>(key, value);
    else if (key == "lr_decay_epochs") c.lr_decay_epochs = parse_int<std::size_t>(key, value);
    else if (key == "image_size") c.image_size = parse_int<std::size_t>(key, value);
    else if (key == "ngf") c.ngf = parse_int<std::size_t>(key, value);
    else if (key == "ndf") c.ndf = parse_int<std::size_t>(key, value);
    else if (key == "d_layers") c.d_layers = parse_int<std::size_t>(key, value);
    else if (key == "jitter") c.jitter = parse_bool(key, value);
    else if (key == "dropout") c.dropout = parse_bool(key, value);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_int<std::size_t>(key, value);
    else if (key == "eval_every") c.eval_every = parse_int<std::size_t>(key, value);
    else fail(ErrorCategory::ConfigError, "unknown config key '" + key + "'");
  }
  if (c.mode == TrainMode::Unpaired && seen.count("lambda_l1")) {
    fail(ErrorCategory::ConfigError, "lambda_l1 is not used in unpaired mode");
  }
  c.validate();
  return c;
}

inline TrainConfig parse_config(const std::filesystem::path& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::NotFound, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), base);
}

/// Canonical `key: value` rendering; parse_config_text(to_text(c)) == c.
inline std::string to_text(const TrainConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "batch_size: " << c.batch_size << "\n"
     << "lr: " << c.lr << "\n"
     << "beta1: " << c.beta1 << "\n"
     << "beta2: " << c.beta2 << "\n"
     << "epsilon: " << c.epsilon << "\n"
     << "weight_decay: " << c.weight_decay << "\n";
  if (c.mode == TrainMode::Paired) os << "lambda_l1: " << c.lambda_l1 << "\n";
  os << "epochs: " << c.epochs << "\n"
     << "mode: " << mode_name(c.mode) << "\n"
     << "lambda_cycle: " << c.lambda_cycle << "\n"
     << "seed: " << c.seed << "\n"
     << "lr_constant_epochs: " << c.lr_constant_epochs << "\n"
     << "lr_decay_epochs: " << c.lr_decay_epochs << "\n"
     << "image_size: " << c.image_size << "\n"
     << "ngf: " << c.ngf << "\n"
     << "ndf: " << c.ndf << "\n"
     << "d_layers: " << c.d_layers << "\n"
     << "jitter: " << (c.jitter ? "true" : "false") << "\n"
     << "dropout: " << (c.dropout ? "true" : "false") << "\n"
     << "checkpoint_every: " << c.checkpoint_every << "\n"
     << "eval_every: " << c.eval_every << "\n";
  return os.str();
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string config_hash(const TrainConfig& c) { return fnv1a_hex(to_text(c)); }

}  // namespace toon2real
