#include "cfine/encoders.hpp"

#include <memory>

#include "cfine/errors.hpp"
#include "cfine/ops.hpp"

namespace cfine {

namespace {

constexpr double kTokenInitStd = 0.5;
constexpr double kPositionInitStd = 0.1;

Tensor with_cls_and_positions(const Tensor& tokens, const Tensor& cls, const Tensor& pos) {
  const std::size_t d = cls.size();
  return add(concat({reshape(cls, {1, d}), tokens}), pos);
}

}  // namespace

EncoderBlockParams EncoderBlockParams::init(const ModelConfig& cfg, Rng& rng) {
  EncoderBlockParams b;
  b.norm1 = LayerNormParams::init(cfg.d);
  b.attn = AttentionParams::init(cfg.d, rng);
  b.norm2 = LayerNormParams::init(cfg.d);
  b.mlp = MlpParams::init(cfg.d, cfg.mlp_ratio * cfg.d, rng);
  return b;
}

void EncoderBlockParams::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  norm1.collect(out, prefix + ".norm1", group);
  attn.collect(out, prefix + ".attn", group);
  norm2.collect(out, prefix + ".norm2", group);
  mlp.collect(out, prefix + ".mlp", group);
}

ImageEncoderParams ImageEncoderParams::init(const ModelConfig& cfg, Rng& rng) {
  ImageEncoderParams p;
  p.patch_proj = LinearParams::init(cfg.p_d, cfg.d, rng);
  p.cls = normal_param({cfg.d}, kPositionInitStd, rng);
  p.pos = normal_param({1 + cfg.n_v, cfg.d}, kPositionInitStd, rng);
  for (std::size_t i = 0; i < cfg.enc_depth; ++i) p.blocks.push_back(EncoderBlockParams::init(cfg, rng));
  return p;
}

void ImageEncoderParams::collect(ParamList& out, const std::string& prefix) const {
  // CLS is listed with the encoder: it is part of the image backbone.
  patch_proj.collect(out, prefix + ".patch_proj", ParamGroup::kBackbone);
  out.push_back({prefix + ".cls", cls, ParamGroup::kHead});
  out.push_back({prefix + ".pos", pos, ParamGroup::kBackbone});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect(out, prefix + ".block" + std::to_string(i), ParamGroup::kBackbone);
  }
}

TextEncoderParams TextEncoderParams::init(const ModelConfig& cfg, Rng& rng) {
  TextEncoderParams p;
  p.token_table = normal_param({cfg.vocab, cfg.d}, kTokenInitStd, rng);
  p.cls = normal_param({cfg.d}, kPositionInitStd, rng);
  p.pos = normal_param({1 + cfg.n_t, cfg.d}, kPositionInitStd, rng);
  for (std::size_t i = 0; i < cfg.enc_depth; ++i) p.blocks.push_back(EncoderBlockParams::init(cfg, rng));
  return p;
}

void TextEncoderParams::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".token_table", token_table, ParamGroup::kBackbone});
  out.push_back({prefix + ".cls", cls, ParamGroup::kHead});
  out.push_back({prefix + ".pos", pos, ParamGroup::kBackbone});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect(out, prefix + ".block" + std::to_string(i), ParamGroup::kBackbone);
  }
}

EmbeddedSequence embed_image(const ImageSample& s, const ImageEncoderParams& p,
                             const ModelConfig& cfg) {
  if (s.patches.size() != cfg.n_v * cfg.p_d) {
    throw ShapeError("embed_image: expected " + std::to_string(cfg.n_v) + "x" +
                     std::to_string(cfg.p_d) + " patch values, got " +
                     std::to_string(s.patches.size()));
  }
  if (p.patch_proj.weight.dim(0) != cfg.p_d) {
    throw ShapeError("embed_image: patch projection expects width " +
                     std::to_string(p.patch_proj.weight.dim(0)));
  }
  const Tensor patches({cfg.n_v, cfg.p_d}, std::vector<double>(s.patches.begin(), s.patches.end()));
  return {with_cls_and_positions(linear(patches, p.patch_proj), p.cls, p.pos),
          std::vector<bool>(cfg.n_v, false)};
}

EmbeddedSequence embed_text(const TextSample& s, const TextEncoderParams& p,
                            const ModelConfig& cfg) {
  if (s.token_ids.size() > cfg.n_t) {
    throw ShapeError("embed_text: " + std::to_string(s.token_ids.size()) +
                     " tokens exceed n_t=" + std::to_string(cfg.n_t));
  }
  std::vector<std::size_t> ids(cfg.n_t, kPadId);
  std::vector<bool> mask(cfg.n_t, true);
  bool any = false;
  for (std::size_t i = 0; i < s.token_ids.size(); ++i) {
    if (s.token_ids[i] >= cfg.vocab) {
      throw ContractError("embed_text: token id " + std::to_string(s.token_ids[i]) +
                          " outside vocabulary of " + std::to_string(cfg.vocab));
    }
    ids[i] = s.token_ids[i];
    mask[i] = s.token_ids[i] == kPadId;
    any = any || !mask[i];
  }
  if (!any) throw ContractError("embed_text: empty content (every position is padding)");
  return {with_cls_and_positions(gather_rows(p.token_table, ids), p.cls, p.pos), std::move(mask)};
}

EncodedModality encode(const EmbeddedSequence& seq, std::span<const EncoderBlockParams> blocks,
                       std::size_t heads) {
  const std::size_t n = seq.pad_mask.size();
  if (seq.tokens.rank() != 2 || seq.tokens.dim(0) != n + 1) {
    throw ShapeError("encode: sequence " + shape_string(seq.tokens.dims()) + " does not match " +
                     std::to_string(n) + " tokens plus CLS");
  }
  // Column 0 is the CLS token and is never masked.
  auto key_mask = std::make_unique<bool[]>(n + 1);
  for (std::size_t i = 0; i < n; ++i) key_mask[i + 1] = seq.pad_mask[i];
  const std::span<const bool> mask_view(key_mask.get(), n + 1);

  Tensor x = seq.tokens;
  Tensor attn;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    try {
      const auto& blk = blocks[b];
      const Tensor normed = layer_norm(x, blk.norm1);
      x = add(x, attention(normed, normed, blk.attn, heads, mask_view, &attn));
      x = add(x, mlp(layer_norm(x, blk.norm2), blk.mlp));
    } catch (const NumericError& e) {
      throw NumericError("encoder block " + std::to_string(b) + ": " + e.what());
    }
  }
  if (blocks.empty()) {
    std::size_t live = 1;
    for (bool m : seq.pad_mask) live += m ? 0 : 1;
    std::vector<double> uniform((n + 1) * (n + 1), 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; j <= n; ++j)
        if (!key_mask[j]) uniform[i * (n + 1) + j] = 1.0 / static_cast<double>(live);
    attn = Tensor({n + 1, n + 1}, std::move(uniform));
  }

  const std::size_t d = x.dim(1);
  EncodedModality out;
  out.output = x;
  out.global = reshape(slice_rows(x, 0, 1), {d});
  out.locals = slice_rows(x, 1, n + 1);
  out.attn_last = attn;
  out.pad_mask = seq.pad_mask;
  return out;
}

}  // namespace cfine
