#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cfine/config.hpp"
#include "cfine/layers.hpp"
#include "cfine/samples.hpp"

namespace cfine {

/// Pre-norm transformer block: x + MHSA(LN(x)), then h + MLP(LN(h)).
struct EncoderBlockParams {
  LayerNormParams norm1;
  AttentionParams attn;
  LayerNormParams norm2;
  MlpParams mlp;

  static EncoderBlockParams init(const ModelConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

struct ImageEncoderParams {
  LinearParams patch_proj;  // p_d × d
  Tensor cls;               // d
  Tensor pos;               // (1 + n_v) × d
  std::vector<EncoderBlockParams> blocks;

  static ImageEncoderParams init(const ModelConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

struct TextEncoderParams {
  Tensor token_table;  // vocab × d
  Tensor cls;          // d
  Tensor pos;          // (1 + n_t) × d
  std::vector<EncoderBlockParams> blocks;

  static TextEncoderParams init(const ModelConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Embedded input: CLS row followed by N token rows, plus the padding mask
/// over the N tokens (true = padding).
struct EmbeddedSequence {
  Tensor tokens;  // (1 + N) × d
  std::vector<bool> pad_mask;
};

struct EncodedModality {
  Tensor output;     // (1 + N) × d, the full final-block output V
  Tensor global;     // d, row 0 of output
  Tensor locals;     // N × d, rows 1.. of output
  Tensor attn_last;  // (1 + N) × (1 + N), head-averaged last-block attention (constant)
  std::vector<bool> pad_mask;

  std::size_t token_count() const { return pad_mask.size(); }
};

EmbeddedSequence embed_image(const ImageSample& s, const ImageEncoderParams& p,
                             const ModelConfig& cfg);
/// Throws ContractError for an all-padding text or out-of-vocabulary id.
EmbeddedSequence embed_text(const TextSample& s, const TextEncoderParams& p,
                            const ModelConfig& cfg);

/// Runs the blocks over `seq`. Padded columns receive zero attention. With no
/// blocks the input passes through and attn_last is uniform over unmasked
/// columns.
EncodedModality encode(const EmbeddedSequence& seq, std::span<const EncoderBlockParams> blocks,
                       std::size_t heads);

}  // namespace cfine
