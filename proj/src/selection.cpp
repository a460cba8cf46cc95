#include "cfine/selection.hpp"

#include "cfine/errors.hpp"
#include "cfine/ops.hpp"

namespace cfine {

std::vector<std::size_t> top_unmasked(std::span<const double> scores,
                                      const std::vector<bool>& masked, std::size_t count) {
  if (!masked.empty() && masked.size() != scores.size()) {
    throw ShapeError("top_unmasked: mask length does not match scores");
  }
  std::vector<std::size_t> out;
  out.reserve(count);
  for (auto idx : argsort_descending(scores)) {
    if (out.size() == count) break;
    if (masked.empty() || !masked[idx]) out.push_back(idx);
  }
  if (out.size() < count) {
    throw ContractError("token selection: need " + std::to_string(count) +
                        " unmasked tokens, only " + std::to_string(out.size()) + " available");
  }
  return out;
}

SelectedTokens select_tokens(const EncodedModality& enc, double ratio) {
  const std::size_t n = enc.token_count();
  const std::size_t k = selection_count(ratio, n);
  if (k == 0) throw ContractError("token selection: ratio selects no tokens");
  if (enc.attn_last.dims() != Shape{n + 1, n + 1}) {
    throw ShapeError("token selection: attention map " + shape_string(enc.attn_last.dims()) +
                     " does not cover " + std::to_string(n) + " tokens");
  }

  SelectedTokens sel;
  const auto attn = enc.attn_last.data();
  sel.scores.assign(attn.begin() + 1, attn.begin() + 1 + static_cast<std::ptrdiff_t>(n));
  sel.indices = top_unmasked(sel.scores, enc.pad_mask, 2 * k);
  sel.high.assign(sel.indices.begin(), sel.indices.begin() + static_cast<std::ptrdiff_t>(k));
  sel.middle.assign(sel.indices.begin() + static_cast<std::ptrdiff_t>(k), sel.indices.end());
  sel.features = gather_rows(enc.locals, sel.indices);
  sel.features_high = slice_rows(sel.features, 0, k);
  sel.features_middle = slice_rows(sel.features, k, 2 * k);
  return sel;
}

std::pair<Tensor, Tensor> split(const SelectedTokens& sel) {
  if (sel.indices.size() != 2 * sel.k()) {
    throw ContractError("split: selection holds " + std::to_string(sel.indices.size()) +
                        " indices, expected 2K");
  }
  return {sel.features_high, sel.features_middle};
}

}  // namespace cfine
