#pragma once

#include <cstddef>
#include <string>

namespace cfine {

/// Architecture and loss hyperparameters. Defaults are the desk-scale toy
/// configuration; the ratios, decoder depth, K_p, margin and loss weights
/// follow the published settings.
struct ModelConfig {
  std::size_t d = 32;          // embedding width
  std::size_t n_v = 16;        // image patches per sample
  std::size_t n_t = 12;        // maximum text length
  std::size_t vocab = 64;      // token vocabulary, id 0 is padding
  std::size_t p_d = 16;        // raw patch vector width
  std::size_t heads = 4;
  std::size_t enc_depth = 2;
  std::size_t mlp_ratio = 4;   // hidden width = mlp_ratio * d
  double r_v = 0.1;            // image selection ratio
  double r_t = 0.2;            // text selection ratio
  std::size_t m_gld = 1;       // global-local decoder blocks
  std::size_t k_p = 3;         // opposite-modality matches pooled per token
  double margin = 0.2;         // triplet margin alpha
  double lambda_c = 10.0;
  double lambda_d = 0.2;
  std::size_t n_classes = 8;   // identity classes seen by the CMPC classifiers

  /// Tokens per selected sub-sequence, ceil(ratio * N).
  std::size_t k_v() const;
  std::size_t k_t() const;
  /// K_p as used by FCD: clamped to the number of candidates on both sides.
  std::size_t effective_k_p() const;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 150;
  std::size_t batch_size = 16;
  double lr_backbone = 3e-3;
  double lr_head = 1e-2;
  double warmup_frac = 0.1;
  double noise_sigma = 0.05;
  std::size_t n_ids = 8;
  std::size_t pairs_per_id = 4;

  void validate() const;
};

/// K = ceil(ratio * n), robust to products like 0.1 * 30 landing a hair above
/// an integer.
std::size_t selection_count(double ratio, std::size_t n);

/// Parses line-based `key = value` text. `#` starts a comment. Unknown keys and
/// malformed values raise ConfigError naming the line.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::string& path);
std::string format_config(const TrainConfig& cfg);

}  // namespace cfine
