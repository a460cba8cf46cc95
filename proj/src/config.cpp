#include "cfine/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cfine/errors.hpp"

namespace cfine {

std::size_t selection_count(double ratio, std::size_t n) {
  const double raw = ratio * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

std::size_t ModelConfig::k_v() const { return selection_count(r_v, n_v); }
std::size_t ModelConfig::k_t() const { return selection_count(r_t, n_t); }
std::size_t ModelConfig::effective_k_p() const { return std::min({k_p, k_v(), k_t()}); }

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (d == 0 || n_v == 0 || n_t == 0 || p_d == 0 || heads == 0) fail("sizes must be positive");
  if (d % heads != 0) fail("d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
  if (vocab < 2) fail("vocab must hold the pad id and at least one token");
  if (vocab > 65536) fail("token ids are stored as u16, vocab must be <= 65536");
  if (!(r_v > 0.0) || !(r_t > 0.0)) fail("selection ratios must be positive");
  if (2 * k_v() > n_v) fail("2*ceil(r_v*n_v) exceeds n_v");
  if (2 * k_t() > n_t) fail("2*ceil(r_t*n_t) exceeds n_t");
  if (k_p == 0) fail("k_p must be at least 1");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (!(margin >= 0.0)) fail("margin must be non-negative");
  if (!(lambda_c >= 0.0) || !(lambda_d >= 0.0)) fail("loss weights must be non-negative");
  if (n_classes < 1) fail("n_classes must be positive");
}

void TrainConfig::validate() const {
  model.validate();
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(lr_backbone >= 0.0) || !(lr_head >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw ConfigError("warmup_frac must be in [0, 1)");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

namespace {

using Setter = std::function<void(TrainConfig&, const std::string&)>;

std::size_t parse_size(const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_key = [&](const char* k, std::size_t ModelConfig::*m) {
      t[k] = [m](TrainConfig& c, const std::string& v) { c.model.*m = parse_size(v); };
    };
    auto real_key = [&](const char* k, double ModelConfig::*m) {
      t[k] = [m](TrainConfig& c, const std::string& v) { c.model.*m = parse_double(v); };
    };
    size_key("d", &ModelConfig::d);
    size_key("n_v", &ModelConfig::n_v);
    size_key("n_t", &ModelConfig::n_t);
    size_key("vocab", &ModelConfig::vocab);
    size_key("p_d", &ModelConfig::p_d);
    size_key("heads", &ModelConfig::heads);
    size_key("enc_depth", &ModelConfig::enc_depth);
    size_key("mlp_ratio", &ModelConfig::mlp_ratio);
    real_key("r_v", &ModelConfig::r_v);
    real_key("r_t", &ModelConfig::r_t);
    size_key("m_gld", &ModelConfig::m_gld);
    size_key("k_p", &ModelConfig::k_p);
    real_key("margin", &ModelConfig::margin);
    real_key("lambda_c", &ModelConfig::lambda_c);
    real_key("lambda_d", &ModelConfig::lambda_d);
    size_key("n_classes", &ModelConfig::n_classes);
    t["epochs"] = [](TrainConfig& c, const std::string& v) { c.epochs = parse_size(v); };
    t["batch_size"] = [](TrainConfig& c, const std::string& v) { c.batch_size = parse_size(v); };
    t["lr_backbone"] = [](TrainConfig& c, const std::string& v) { c.lr_backbone = parse_double(v); };
    t["lr_head"] = [](TrainConfig& c, const std::string& v) { c.lr_head = parse_double(v); };
    t["warmup_frac"] = [](TrainConfig& c, const std::string& v) { c.warmup_frac = parse_double(v); };
    t["noise_sigma"] = [](TrainConfig& c, const std::string& v) { c.noise_sigma = parse_double(v); };
    t["n_ids"] = [](TrainConfig& c, const std::string& v) { c.n_ids = parse_size(v); };
    t["pairs_per_id"] = [](TrainConfig& c, const std::string& v) { c.pairs_per_id = parse_size(v); };
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    try {
      it->second(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  return base;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const auto& m = c.model;
  os << "d = " << m.d << "\nn_v = " << m.n_v << "\nn_t = " << m.n_t << "\nvocab = " << m.vocab
     << "\np_d = " << m.p_d << "\nheads = " << m.heads << "\nenc_depth = " << m.enc_depth
     << "\nmlp_ratio = " << m.mlp_ratio << "\nr_v = " << m.r_v << "\nr_t = " << m.r_t
     << "\nm_gld = " << m.m_gld << "\nk_p = " << m.k_p << "\nmargin = " << m.margin
     << "\nlambda_c = " << m.lambda_c << "\nlambda_d = " << m.lambda_d
     << "\nn_classes = " << m.n_classes << "\nepochs = " << c.epochs
     << "\nbatch_size = " << c.batch_size << "\nlr_backbone = " << c.lr_backbone
     << "\nlr_head = " << c.lr_head << "\nwarmup_frac = " << c.warmup_frac
     << "\nnoise_sigma = " << c.noise_sigma << "\nn_ids = " << c.n_ids
     << "\npairs_per_id = " << c.pairs_per_id << "\n";
  return os.str();
}

}  // namespace cfine
