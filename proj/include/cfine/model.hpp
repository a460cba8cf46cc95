#pragma once

#include <array>
#include <span>
#include <vector>

#include "cfine/alignment.hpp"
#include "cfine/config.hpp"
#include "cfine/encoders.hpp"
#include "cfine/mgf.hpp"
#include "cfine/objectives.hpp"
#include "cfine/samples.hpp"
#include "cfine/selection.hpp"

namespace cfine {

struct ModelParams {
  ImageEncoderParams image_encoder;
  TextEncoderParams text_encoder;
  std::vector<GldBlockParams> image_gld;
  std::vector<GldBlockParams> text_gld;
  std::array<Tensor, 3> classifiers;  // per granularity, n_classes × d
};

/// Everything one modality produces for one sample on the way to its
/// multi-grained features.
struct ModalityOutput {
  EncodedModality enc;
  SelectedTokens sel;
  MultiGrainFeatures feats;

  AlignmentInputs alignment_inputs() const { return {enc.global, sel.features, sel.features_high}; }
};

class Model {
 public:
  static Model create(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  const ModelParams& params() const { return params_; }

  /// Every trainable tensor in a fixed order with a stable dotted name.
  ParamList parameters() const;

  ModalityOutput forward_image(const ImageSample& s) const;
  ModalityOutput forward_text(const TextSample& s) const;

  /// Full training forward for a batch: both modalities, then batch S_c/S_f.
  BatchForward forward_batch(std::span<const PairSample* const> batch) const;
  LossBreakdown loss(std::span<const PairSample* const> batch) const;

 private:
  Model(ModelConfig cfg, ModelParams params) : cfg_(cfg), params_(std::move(params)) {}

  ModelConfig cfg_;
  ModelParams params_;
};

}  // namespace cfine
