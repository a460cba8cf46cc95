#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cfine/checkpoint.hpp"
#include "cfine/config.hpp"
#include "cfine/model.hpp"
#include "cfine/optim.hpp"
#include "cfine/rng.hpp"
#include "cfine/synth_data.hpp"

namespace cfine {

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double l_cm = 0.0;      // means over the epoch's steps
  double l_c = 0.0;
  double l_d = 0.0;
  double total = 0.0;
  double rank1 = 0.0;     // training-set retrieval after the epoch
  double rank5 = 0.0;
  double rank10 = 0.0;
};

/// Tab-separated: epoch, l_cm, l_c, l_d, total, rank1, rank5, rank10.
std::string format_metrics(const EpochMetrics& m);

struct TrainOptions {
  /// Stop after this many optimizer steps (the partial epoch still reports).
  std::optional<std::uint64_t> max_steps;
  bool evaluate_each_epoch = true;
  std::ostream* log = nullptr;  // receives one metrics line per epoch
};

/// Model, optimizer and shuffle stream of one training run.
struct TrainState {
  Model model;
  Adam optimizer;
  Rng rng;

  /// Seeds one stream: it initializes the model, then drives batch shuffles.
  static TrainState create(const TrainConfig& cfg, std::uint64_t seed, std::uint64_t steps_per_epoch);

  Checkpoint checkpoint() const;
  static TrainState from_checkpoint(const Checkpoint& ckpt);
};

struct TrainResult {
  TrainState state;
  std::vector<EpochMetrics> epochs;
  std::vector<double> step_losses;
};

/// Optimizer steps per epoch for a corpus of `n` pairs: full batches plus a
/// trailing partial batch of at least two.
std::uint64_t steps_per_epoch(std::size_t n, std::size_t batch_size);

/// Adam over shuffled batches with the warmup/step-decay schedule. A
/// non-finite loss or gradient aborts with NumericError naming the step.
TrainResult train(const Corpus& corpus, const TrainConfig& cfg, std::uint64_t seed,
                  const TrainOptions& opts = {});

/// Rebuilds a model from a checkpoint's config snapshot and parameters.
Model model_from_checkpoint(const Checkpoint& ckpt);
/// Copies stored parameters into `model`. Raises ConfigError if the stored
/// config or any tensor shape disagrees with the model.
void restore_parameters(Model& model, const Checkpoint& ckpt);

}  // namespace cfine
