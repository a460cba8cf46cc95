#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cfine/alignment.hpp"
#include "cfine/config.hpp"
#include "cfine/mgf.hpp"

namespace cfine {

using Labels = std::span<const std::uint32_t>;

inline constexpr double kCmpmEpsilon = 1e-8;

/// Cross-modal projection matching, summed over both directions.
/// Image→text: p_ij = softmax_j(x_iᵀ ȳ_j) with ȳ unit-normalized,
/// q_ij = match(i,j) / Σ_k match(i,k), loss = mean_i Σ_j p_ij log(p_ij / (q_ij + ε)).
Tensor cmpm(const Tensor& img, const Tensor& txt, Labels labels_img, Labels labels_txt);
Tensor cmpm(const Tensor& img, const Tensor& txt, Labels labels);

/// Cross-modal projection classification, summed over both directions.
/// Each feature is projected onto its matched partner's unit direction,
/// x̂ = (xᵀȳ)ȳ, and classified by `class_weights` (C × d, rows normalized,
/// no bias) with mean cross-entropy.
Tensor cmpc(const Tensor& img, const Tensor& txt, Labels labels, const Tensor& class_weights);

/// Bidirectional hinge on s_cf against the batch-hardest negatives,
/// averaged over the B matched (diagonal) pairs.
Tensor triplet(const Tensor& s_cf, Labels labels_img, Labels labels_txt, double margin);

/// Sum over the six ordered granularity pairs of cos(v_i, v_j) + cos(t_i, t_j).
Tensor diversity(const MultiGrainFeatures& v, const MultiGrainFeatures& t);

struct LossBreakdown {
  std::array<Tensor, 3> cmpm_per_grain;  // low, middle, high
  std::array<Tensor, 3> cmpc_per_grain;
  Tensor l_cm;
  Tensor l_c;
  Tensor l_d;
  Tensor total;
};

/// l_cm + λ_c·l_c + λ_d·l_d.
Tensor compose_total(const Tensor& l_cm, const Tensor& l_c, const Tensor& l_d, double lambda_c,
                     double lambda_d);

struct BatchForward {
  std::vector<MultiGrainFeatures> images;
  std::vector<MultiGrainFeatures> texts;
  std::vector<std::uint32_t> labels;  // shared by image i and text i
  BatchSimilarities similarities;
};

/// Assembles every term. `classifiers` holds one C × d table per
/// granularity, shared by both modalities.
LossBreakdown total_loss(const BatchForward& batch, std::span<const Tensor, 3> classifiers,
                         const ModelConfig& cfg);

/// B × d matrix of one granularity across the batch (0 = low, 1 = middle, 2 = high).
Tensor stack_grain(std::span<const MultiGrainFeatures> feats, std::size_t grain);

}  // namespace cfine
