#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cfine/mgf.hpp"

namespace cfine {

class Model;
struct Corpus;

enum class InferenceMode {
  kAllGrains,  // s_l + s_m + s_h
  kLowOnly,    // s_l alone, the single-grain baseline
};

/// Sum of per-granularity cosines. Uses no CFR/FCD computation.
double infer_similarity(const MultiGrainFeatures& img, const MultiGrainFeatures& txt,
                        InferenceMode mode = InferenceMode::kAllGrains);

struct RetrievalResult {
  std::vector<std::vector<std::size_t>> ranked;  // per query, gallery indices best first
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
};

/// Ranks a queries × gallery score matrix. Ties go to the lower gallery index.
/// A query hits at K when any gallery item with its label is in its top K.
RetrievalResult rank_gallery(const std::vector<std::vector<double>>& scores,
                             std::span<const std::uint32_t> query_labels,
                             std::span<const std::uint32_t> gallery_labels);

struct CorpusFeatures {
  std::vector<MultiGrainFeatures> images;  // gallery
  std::vector<MultiGrainFeatures> texts;   // queries
  std::vector<std::uint32_t> labels;       // shared by image i and text i
};

/// Inference-mode features for every pair, without recording a graph.
CorpusFeatures extract_features(const Model& model, const Corpus& corpus);

/// texts × images matrix of infer_similarity.
std::vector<std::vector<double>> similarity_matrix(const CorpusFeatures& f,
                                                   InferenceMode mode = InferenceMode::kAllGrains);

/// Text-to-image retrieval over the corpus's own images.
RetrievalResult evaluate(const Model& model, const Corpus& corpus,
                         InferenceMode mode = InferenceMode::kAllGrains);
RetrievalResult evaluate(const CorpusFeatures& f, InferenceMode mode = InferenceMode::kAllGrains);

}  // namespace cfine
