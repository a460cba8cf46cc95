#include "cfine/model.hpp"

#include <string>

#include "cfine/errors.hpp"

namespace cfine {

Model Model::create(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.image_encoder = ImageEncoderParams::init(cfg, rng);
  p.text_encoder = TextEncoderParams::init(cfg, rng);
  for (std::size_t i = 0; i < cfg.m_gld; ++i) p.image_gld.push_back(GldBlockParams::init(cfg, rng));
  for (std::size_t i = 0; i < cfg.m_gld; ++i) p.text_gld.push_back(GldBlockParams::init(cfg, rng));
  for (auto& c : p.classifiers) c = normal_param({cfg.n_classes, cfg.d}, 1.0, rng);
  return Model(cfg, std::move(p));
}

ParamList Model::parameters() const {
  ParamList out;
  params_.image_encoder.collect(out, "image.encoder");
  params_.text_encoder.collect(out, "text.encoder");
  for (std::size_t i = 0; i < params_.image_gld.size(); ++i) {
    params_.image_gld[i].collect(out, "image.gld" + std::to_string(i));
  }
  for (std::size_t i = 0; i < params_.text_gld.size(); ++i) {
    params_.text_gld[i].collect(out, "text.gld" + std::to_string(i));
  }
  const char* grains[] = {"low", "middle", "high"};
  for (std::size_t g = 0; g < 3; ++g) {
    out.push_back({std::string("classifier.") + grains[g], params_.classifiers[g], ParamGroup::kHead});
  }
  return out;
}

ModalityOutput Model::forward_image(const ImageSample& s) const {
  ModalityOutput out;
  out.enc = encode(embed_image(s, params_.image_encoder, cfg_), params_.image_encoder.blocks, cfg_.heads);
  out.sel = select_tokens(out.enc, cfg_.r_v);
  out.feats = mgf_forward(out.enc, out.sel, params_.image_gld, cfg_.heads);
  return out;
}

ModalityOutput Model::forward_text(const TextSample& s) const {
  ModalityOutput out;
  out.enc = encode(embed_text(s, params_.text_encoder, cfg_), params_.text_encoder.blocks, cfg_.heads);
  out.sel = select_tokens(out.enc, cfg_.r_t);
  out.feats = mgf_forward(out.enc, out.sel, params_.text_gld, cfg_.heads);
  return out;
}

BatchForward Model::forward_batch(std::span<const PairSample* const> batch) const {
  BatchForward out;
  std::vector<AlignmentInputs> img_in, txt_in;
  for (const PairSample* pair : batch) {
    if (pair->image.identity != pair->text.identity) {
      throw ContractError("forward_batch: image and text identities differ within a pair");
    }
    const auto img = forward_image(pair->image);
    const auto txt = forward_text(pair->text);
    out.images.push_back(img.feats);
    out.texts.push_back(txt.feats);
    out.labels.push_back(pair->image.identity);
    img_in.push_back(img.alignment_inputs());
    txt_in.push_back(txt.alignment_inputs());
  }
  out.similarities = batch_similarities(img_in, txt_in, cfg_.effective_k_p());
  return out;
}

LossBreakdown Model::loss(std::span<const PairSample* const> batch) const {
  return total_loss(forward_batch(batch), params_.classifiers, cfg_);
}

}  // namespace cfine
