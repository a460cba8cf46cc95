#include "cfine/alignment.hpp"

#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "cfine/errors.hpp"
#include "cfine/ops.hpp"

namespace cfine {

namespace {

std::atomic<std::uint64_t> g_cfr_calls{0};
std::atomic<std::uint64_t> g_fcd_calls{0};
std::atomic<std::uint64_t> g_batch_calls{0};

void require_rows(const char* what, const Tensor& t, std::size_t d) {
  if (t.rank() != 2 || t.dim(1) != d) {
    throw ShapeError(std::string(what) + ": expected rows of width " + std::to_string(d) +
                     ", got " + shape_string(t.dims()));
  }
}

// Row norms of an R × d block, rejecting zero rows.
std::vector<double> checked_row_norms(const Tensor& t, const char* label) {
  const std::size_t rows = t.dim(0), d = t.dim(1);
  const auto x = t.data();
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += x[r * d + c] * x[r * d + c];
    if (ss == 0.0) {
      throw NumericError(std::string("fcd: zero-norm ") + label + " row " + std::to_string(r));
    }
    norms[r] = std::sqrt(ss);
  }
  return norms;
}

// For each query row, the k_p candidate rows with highest cosine. Indices are
// offset by `candidate_base` so they address a stacked candidate matrix.
void append_top_matches(const Tensor& queries, const std::vector<double>& qn,
                        const Tensor& candidates, const std::vector<double>& cn, std::size_t k_p,
                        std::size_t candidate_base, std::vector<std::size_t>& out) {
  const std::size_t nq = queries.dim(0), nc = candidates.dim(0), d = queries.dim(1);
  const auto Q = queries.data();
  const auto C = candidates.data();
  std::vector<double> row(nc);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += Q[i * d + c] * C[j * d + c];
      row[j] = dot / (qn[i] * cn[j]);
    }
    // Softmax over the row is monotone, so ranking the cosines directly picks
    // the same members.
    const auto order = argsort_descending(row);
    for (std::size_t t = 0; t < k_p; ++t) out.push_back(candidate_base + order[t]);
  }
}

// Mean of groups of k rows: rows [g*k, (g+1)*k) of `gathered` -> row g.
Tensor mean_groups(const Tensor& gathered, std::size_t k) {
  const std::size_t rows = gathered.dim(0), d = gathered.dim(1);
  return mean_axis(reshape(gathered, {rows / k, k, d}), 1);
}

}  // namespace

Tensor softmax_pool_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("softmax_pool_rows: expected a matrix");
  return sum_axis(mul(softmax(scores, 1), scores), 1);
}

Tensor cfr_pair(const Tensor& v_g, const Tensor& v_selected, const Tensor& t_g,
                const Tensor& t_selected) {
  g_cfr_calls.fetch_add(1, std::memory_order_relaxed);
  const std::size_t d = v_g.size();
  if (t_g.size() != d) throw ShapeError("cfr_pair: global features differ in width");
  require_rows("cfr_pair", v_selected, d);
  require_rows("cfr_pair", t_selected, d);
  const Tensor s_iw = reshape(transpose(matmul(t_selected, reshape(v_g, {d, 1}))),
                              {1, t_selected.dim(0)});
  const Tensor s_ps = reshape(matmul(v_selected, reshape(t_g, {d, 1})), {1, v_selected.dim(0)});
  return reshape(scale(add(softmax_pool_rows(s_iw), softmax_pool_rows(s_ps)), 0.5), {});
}

Tensor fcd_pair(const Tensor& v_high, const Tensor& t_high, std::size_t k_p) {
  g_fcd_calls.fetch_add(1, std::memory_order_relaxed);
  if (v_high.rank() != 2) throw ShapeError("fcd_pair: patches must be a matrix");
  const std::size_t d = v_high.dim(1);
  require_rows("fcd_pair", t_high, d);
  const std::size_t kv = v_high.dim(0), kt = t_high.dim(0);
  if (k_p == 0 || k_p > kv || k_p > kt) {
    throw ContractError("fcd_pair: k_p=" + std::to_string(k_p) + " must lie in [1, min(" +
                        std::to_string(kv) + ", " + std::to_string(kt) + ")]");
  }
  const auto vn = checked_row_norms(v_high, "patch");
  const auto tn = checked_row_norms(t_high, "word");

  std::vector<std::size_t> word_to_patch, patch_to_word;
  append_top_matches(t_high, tn, v_high, vn, k_p, 0, word_to_patch);
  append_top_matches(v_high, vn, t_high, tn, k_p, 0, patch_to_word);

  const Tensor pooled_patches = mean_groups(gather_rows(v_high, word_to_patch), k_p);
  const Tensor pooled_words = mean_groups(gather_rows(t_high, patch_to_word), k_p);
  return add(sum(cosine_rows(t_high, pooled_patches)), sum(cosine_rows(v_high, pooled_words)));
}

BatchSimilarities batch_similarities(std::span<const AlignmentInputs> images,
                                     std::span<const AlignmentInputs> texts, std::size_t k_p) {
  g_batch_calls.fetch_add(1, std::memory_order_relaxed);
  const std::size_t b = images.size();
  if (b == 0 || texts.size() != b) {
    throw ContractError("batch_similarities: need equal, non-empty image and text batches");
  }
  const std::size_t d = images[0].global.size();
  const std::size_t sel_v = images[0].selected.dim(0), sel_t = texts[0].selected.dim(0);
  const std::size_t kv = images[0].high.dim(0), kt = texts[0].high.dim(0);
  if (k_p == 0 || k_p > kv || k_p > kt) {
    throw ContractError("batch_similarities: k_p=" + std::to_string(k_p) + " must lie in [1, min(" +
                        std::to_string(kv) + ", " + std::to_string(kt) + ")]");
  }

  std::vector<Tensor> vg, vs, vh, tg, ts, th;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& im = images[i];
    const auto& tx = texts[i];
    if (im.global.size() != d || tx.global.size() != d || im.selected.dims() != Shape{sel_v, d} ||
        tx.selected.dims() != Shape{sel_t, d} || im.high.dims() != Shape{kv, d} ||
        tx.high.dims() != Shape{kt, d}) {
      throw ShapeError("batch_similarities: sample " + std::to_string(i) +
                       " does not match the batch layout");
    }
    vg.push_back(reshape(im.global, {1, d}));
    tg.push_back(reshape(tx.global, {1, d}));
    vs.push_back(im.selected);
    ts.push_back(tx.selected);
    vh.push_back(im.high);
    th.push_back(tx.high);
  }
  const Tensor v_glob = concat(vg), t_glob = concat(tg);
  const Tensor v_sel = concat(vs), t_sel = concat(ts);
  const Tensor v_high = concat(vh), t_high = concat(th);

  // CFR. Row i of V_g · T_selᵀ holds image i against every text's words, in
  // blocks of sel_t, so reshaping to (B·B) × sel_t puts pair (i, j) at row i·B + j.
  const Tensor s_iw = reshape(softmax_pool_rows(reshape(matmul(v_glob, transpose(t_sel)),
                                                        {b * b, sel_t})),
                              {b, b});
  // Same trick from the text side lands pair (i, j) at row j·B + i.
  const Tensor s_ps = transpose(reshape(
      softmax_pool_rows(reshape(matmul(t_glob, transpose(v_sel)), {b * b, sel_v})), {b, b}));
  const Tensor s_c = scale(add(s_iw, s_ps), 0.5);

  // FCD over high-level tokens, all pairs at once. Match indices are
  // constants, collected per pair in (i, j) row-major order.
  std::vector<std::vector<double>> vnorm(b), tnorm(b);
  for (std::size_t i = 0; i < b; ++i) {
    vnorm[i] = checked_row_norms(images[i].high, "patch");
    tnorm[i] = checked_row_norms(texts[i].high, "word");
  }
  std::vector<std::size_t> word_rows, word_matches, patch_rows, patch_matches;
  word_rows.reserve(b * b * kt);
  patch_rows.reserve(b * b * kv);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      append_top_matches(texts[j].high, tnorm[j], images[i].high, vnorm[i], k_p, i * kv, word_matches);
      append_top_matches(images[i].high, vnorm[i], texts[j].high, tnorm[j], k_p, j * kt, patch_matches);
      for (std::size_t w = 0; w < kt; ++w) word_rows.push_back(j * kt + w);
      for (std::size_t p = 0; p < kv; ++p) patch_rows.push_back(i * kv + p);
    }
  }
  const Tensor word_scores = cosine_rows(gather_rows(t_high, word_rows),
                                         mean_groups(gather_rows(v_high, word_matches), k_p));
  const Tensor patch_scores = cosine_rows(gather_rows(v_high, patch_rows),
                                          mean_groups(gather_rows(t_high, patch_matches), k_p));
  const Tensor s_f = reshape(add(sum_axis(reshape(word_scores, {b * b, kt}), 1),
                                 sum_axis(reshape(patch_scores, {b * b, kv}), 1)),
                             {b, b});
  return {s_c, s_f, add(s_c, s_f)};
}

AlignmentCallCounts alignment_call_counts() {
  return {g_cfr_calls.load(), g_fcd_calls.load(), g_batch_calls.load()};
}

void reset_alignment_call_counts() {
  g_cfr_calls = 0;
  g_fcd_calls = 0;
  g_batch_calls = 0;
}

}  // namespace cfine
