#include "cfine/retrieval.hpp"

#include <algorithm>

#include "cfine/errors.hpp"
#include "cfine/model.hpp"
#include "cfine/ops.hpp"
#include "cfine/synth_data.hpp"

namespace cfine {

double infer_similarity(const MultiGrainFeatures& img, const MultiGrainFeatures& txt,
                        InferenceMode mode) {
  NoGradGuard no_grad;
  double s = cosine(img.low, txt.low).item();
  if (mode == InferenceMode::kAllGrains) {
    s += cosine(img.middle, txt.middle).item();
    s += cosine(img.high, txt.high).item();
  }
  return s;
}

RetrievalResult rank_gallery(const std::vector<std::vector<double>>& scores,
                             std::span<const std::uint32_t> query_labels,
                             std::span<const std::uint32_t> gallery_labels) {
  if (gallery_labels.empty()) throw ContractError("rank_gallery: empty gallery");
  if (scores.size() != query_labels.size()) {
    throw ShapeError("rank_gallery: " + std::to_string(scores.size()) + " score rows for " +
                     std::to_string(query_labels.size()) + " queries");
  }
  RetrievalResult out;
  std::size_t hits[3] = {0, 0, 0};
  constexpr std::size_t ks[3] = {1, 5, 10};
  for (std::size_t q = 0; q < scores.size(); ++q) {
    if (scores[q].size() != gallery_labels.size()) {
      throw ShapeError("rank_gallery: score row " + std::to_string(q) + " has the wrong length");
    }
    auto order = argsort_descending(scores[q]);
    std::size_t first_hit = order.size();
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (gallery_labels[order[r]] == query_labels[q]) {
        first_hit = r;
        break;
      }
    }
    for (int k = 0; k < 3; ++k) hits[k] += first_hit < ks[k] ? 1 : 0;
    out.ranked.push_back(std::move(order));
  }
  const double n = static_cast<double>(std::max<std::size_t>(scores.size(), 1));
  out.rank1 = 100.0 * static_cast<double>(hits[0]) / n;
  out.rank5 = 100.0 * static_cast<double>(hits[1]) / n;
  out.rank10 = 100.0 * static_cast<double>(hits[2]) / n;
  return out;
}

CorpusFeatures extract_features(const Model& model, const Corpus& corpus) {
  NoGradGuard no_grad;
  CorpusFeatures f;
  for (const auto& pair : corpus.pairs) {
    f.images.push_back(model.forward_image(pair.image).feats);
    f.texts.push_back(model.forward_text(pair.text).feats);
    f.labels.push_back(pair.image.identity);
  }
  return f;
}

std::vector<std::vector<double>> similarity_matrix(const CorpusFeatures& f, InferenceMode mode) {
  std::vector<std::vector<double>> s(f.texts.size(), std::vector<double>(f.images.size()));
  for (std::size_t q = 0; q < f.texts.size(); ++q) {
    for (std::size_t g = 0; g < f.images.size(); ++g) s[q][g] = infer_similarity(f.images[g], f.texts[q], mode);
  }
  return s;
}

RetrievalResult evaluate(const CorpusFeatures& f, InferenceMode mode) {
  return rank_gallery(similarity_matrix(f, mode), f.labels, f.labels);
}

RetrievalResult evaluate(const Model& model, const Corpus& corpus, InferenceMode mode) {
  return evaluate(extract_features(model, corpus), mode);
}

}  // namespace cfine
