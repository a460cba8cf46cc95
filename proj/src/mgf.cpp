#include "cfine/mgf.hpp"

#include <memory>

#include "cfine/errors.hpp"
#include "cfine/ops.hpp"

namespace cfine {

GldBlockParams GldBlockParams::init(const ModelConfig& cfg, Rng& rng) {
  GldBlockParams p;
  p.norm1 = LayerNormParams::init(cfg.d);
  p.self_attn = AttentionParams::init(cfg.d, rng);
  p.norm2 = LayerNormParams::init(cfg.d);
  p.cross_attn = AttentionParams::init(cfg.d, rng);
  p.norm3 = LayerNormParams::init(cfg.d);
  p.mlp = MlpParams::init(cfg.d, cfg.mlp_ratio * cfg.d, rng);
  return p;
}

void GldBlockParams::collect(ParamList& out, const std::string& prefix) const {
  constexpr auto g = ParamGroup::kHead;
  norm1.collect(out, prefix + ".norm1", g);
  self_attn.collect(out, prefix + ".self_attn", g);
  norm2.collect(out, prefix + ".norm2", g);
  cross_attn.collect(out, prefix + ".cross_attn", g);
  norm3.collect(out, prefix + ".norm3", g);
  mlp.collect(out, prefix + ".mlp", g);
}

Tensor gld_block(const Tensor& seq, const Tensor& context, std::span<const bool> context_mask,
                 const GldBlockParams& p, std::size_t heads) {
  if (seq.rank() != 2 || context.rank() != 2 || seq.dim(1) != context.dim(1)) {
    throw ShapeError("gld_block: sequence " + shape_string(seq.dims()) + " and context " +
                     shape_string(context.dims()) + " disagree");
  }
  const Tensor n1 = layer_norm(seq, p.norm1);
  const Tensor x1 = add(seq, attention(n1, n1, p.self_attn, heads));
  const Tensor x2 = add(x1, attention(layer_norm(x1, p.norm2), context, p.cross_attn, heads, context_mask));
  return add(x2, mlp(layer_norm(x2, p.norm3), p.mlp));
}

MultiGrainFeatures mgf_forward(const EncodedModality& enc, const SelectedTokens& sel,
                               std::span<const GldBlockParams> blocks, std::size_t heads) {
  if (sel.scores.size() != enc.token_count()) {
    throw ContractError("mgf_forward: selection was made on a different sequence");
  }
  const std::size_t n = enc.token_count();
  const std::size_t d = enc.global.size();
  auto key_mask = std::make_unique<bool[]>(n + 1);
  for (std::size_t i = 0; i < n; ++i) key_mask[i + 1] = enc.pad_mask[i];
  const std::span<const bool> mask(key_mask.get(), n + 1);

  const Tensor cls = reshape(enc.global, {1, d});
  auto run = [&](const Tensor& tokens) {
    Tensor x = concat({cls, tokens});
    for (const auto& b : blocks) x = gld_block(x, enc.output, mask, b, heads);
    return reshape(slice_rows(x, 0, 1), {d});
  };
  const auto [high, middle] = split(sel);
  return {enc.global, run(middle), run(high)};
}

}  // namespace cfine
