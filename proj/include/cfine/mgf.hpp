#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cfine/encoders.hpp"
#include "cfine/selection.hpp"

namespace cfine {

/// One global-local decoder block:
///   X1 = X  + MHSA(LN1(X))
///   X2 = X1 + MHCA(LN2(X1), V)      keys/values from the raw encoder output
///   X3 = X2 + MLP(LN3(X2))
struct GldBlockParams {
  LayerNormParams norm1;
  AttentionParams self_attn;
  LayerNormParams norm2;
  AttentionParams cross_attn;
  LayerNormParams norm3;
  MlpParams mlp;

  static GldBlockParams init(const ModelConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

/// {low, middle, high} global features of one sample. `low` is the encoder's
/// global feature itself.
struct MultiGrainFeatures {
  Tensor low;
  Tensor middle;
  Tensor high;
};

/// `seq` is (1 + K) × d with a CLS row first; `context` is the full (1 + N) × d
/// encoder output, `context_mask` its key mask (empty = none masked).
Tensor gld_block(const Tensor& seq, const Tensor& context, std::span<const bool> context_mask,
                 const GldBlockParams& p, std::size_t heads);

/// Runs the shared decoder stack over [CLS_h; high] and [CLS_m; middle], both
/// CLS rows initialized from the encoder global feature.
MultiGrainFeatures mgf_forward(const EncodedModality& enc, const SelectedTokens& sel,
                               std::span<const GldBlockParams> blocks, std::size_t heads);

}  // namespace cfine
