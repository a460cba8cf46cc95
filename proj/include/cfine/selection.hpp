#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfine/encoders.hpp"

namespace cfine {

/// The 2K most informative local tokens of one sample, ranked by the CLS row
/// of the last attention map. `indices` is in descending score order with
/// ties to the lower token position; the first K form the high-level
/// sub-sequence and the remaining K the middle-level one.
struct SelectedTokens {
  std::vector<double> scores;          // m = A[0, 1:], length N
  std::vector<std::size_t> indices;    // 2K token positions
  std::vector<std::size_t> high;       // indices[0, K)
  std::vector<std::size_t> middle;     // indices[K, 2K)
  Tensor features;                     // 2K × d, rows in `indices` order
  Tensor features_high;                // K × d
  Tensor features_middle;              // K × d

  std::size_t k() const { return high.size(); }
};

/// Top `count` positions of `scores` among unmasked entries. Throws
/// ContractError when fewer than `count` entries are unmasked.
std::vector<std::size_t> top_unmasked(std::span<const double> scores,
                                      const std::vector<bool>& masked, std::size_t count);

/// Selects 2K tokens with K = ceil(ratio * N). Gathered features stay on the
/// graph; the indices are constants.
SelectedTokens select_tokens(const EncodedModality& enc, double ratio);

/// Splits into (high, middle) feature blocks.
std::pair<Tensor, Tensor> split(const SelectedTokens& sel);

}  // namespace cfine
