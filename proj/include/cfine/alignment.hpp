#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "cfine/tensor.hpp"

namespace cfine {

/// The per-sample inputs the training-only alignment heads need.
struct AlignmentInputs {
  Tensor global;    // d
  Tensor selected;  // 2K × d, high rows then middle rows
  Tensor high;      // K × d
};

struct BatchSimilarities {
  Tensor s_c;   // B × B, cross-grained refinement score for (image i, text j)
  Tensor s_f;   // B × B, fine-grained correspondence score
  Tensor s_cf;  // s_c + s_f
};

/// Σ softmax(x)_i · x_i over each row of an R × L matrix, giving length R.
Tensor softmax_pool_rows(const Tensor& scores);

/// Cross-grained refinement for one image-text pair: image-word and
/// sentence-patch inner products, each softmax-pooled, then averaged.
Tensor cfr_pair(const Tensor& v_g, const Tensor& v_selected, const Tensor& t_g,
                const Tensor& t_selected);

/// Fine-grained correspondence for one pair. Each word pools the mean of its
/// k_p most cosine-similar patches and scores cosine(word, pooled); each
/// patch does the same against the words. Returns the sum over all K_v + K_t
/// matched pairs. Requires 1 <= k_p <= min(K_v, K_t); zero-norm rows raise
/// NumericError naming the row.
Tensor fcd_pair(const Tensor& v_high, const Tensor& t_high, std::size_t k_p);

/// Fills every (image i, text j) entry. FCD runs on the high-level sets only.
BatchSimilarities batch_similarities(std::span<const AlignmentInputs> images,
                                     std::span<const AlignmentInputs> texts, std::size_t k_p);

/// How many times the alignment heads have run, for verifying they stay out
/// of inference.
struct AlignmentCallCounts {
  std::uint64_t cfr = 0;
  std::uint64_t fcd = 0;
  std::uint64_t batch = 0;
};

AlignmentCallCounts alignment_call_counts();
void reset_alignment_call_counts();

}  // namespace cfine
