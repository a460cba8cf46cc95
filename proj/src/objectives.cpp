#include "cfine/objectives.hpp"

#include <cmath>
#include <string>

#include "cfine/errors.hpp"
#include "cfine/ops.hpp"

namespace cfine {

namespace {

void require_batch(const char* op, const Tensor& img, const Tensor& txt, std::size_t labels) {
  if (img.rank() != 2 || img.dims() != txt.dims()) {
    throw ShapeError(std::string(op) + ": feature blocks " + shape_string(img.dims()) + " and " +
                     shape_string(txt.dims()) + " must be matching B x d matrices");
  }
  if (labels != img.dim(0)) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels) + " labels for batch of " +
                     std::to_string(img.dim(0)));
  }
}

// One direction of CMPM: rows of `anchor` against normalized `other`.
Tensor cmpm_direction(const Tensor& anchor, const Tensor& other, Labels anchor_labels,
                      Labels other_labels) {
  const std::size_t b = anchor.dim(0);
  const Tensor logits = matmul(anchor, transpose(l2_normalize_rows(other)));
  std::vector<double> log_q(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < b; ++j) positives += anchor_labels[i] == other_labels[j] ? 1 : 0;
    if (positives == 0) {
      throw ContractError("cmpm: row " + std::to_string(i) + " has no matching sample in the batch");
    }
    for (std::size_t j = 0; j < b; ++j) {
      const double q = anchor_labels[i] == other_labels[j] ? 1.0 / static_cast<double>(positives) : 0.0;
      log_q[i * b + j] = std::log(q + kCmpmEpsilon);
    }
  }
  const Tensor p = softmax(logits, 1);
  const Tensor kl = mul(p, sub(log_softmax(logits, 1), Tensor({b, b}, std::move(log_q))));
  return scale(sum(kl), 1.0 / static_cast<double>(b));
}

// One direction of CMPC: `feats` projected onto the matched `partner` rows.
Tensor cmpc_direction(const Tensor& feats, const Tensor& partner, Labels labels,
                      const Tensor& unit_weights) {
  const std::size_t b = feats.dim(0), d = feats.dim(1), c = unit_weights.dim(0);
  const Tensor dir = l2_normalize_rows(partner);
  // (xᵀȳ) per row, broadcast back across the row through a ones matmul.
  const Tensor coeff = reshape(sum_axis(mul(feats, dir), 1), {b, 1});
  const Tensor projected = mul(matmul(coeff, Tensor::full({1, d}, 1.0)), dir);
  const Tensor logp = log_softmax(matmul(projected, transpose(unit_weights)), 1);
  std::vector<std::size_t> picks(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) {
      throw ContractError("cmpc: label " + std::to_string(labels[i]) + " outside " +
                          std::to_string(c) + " classes");
    }
    picks[i] = i * c + labels[i];
  }
  return scale(sum(gather_rows(reshape(logp, {b * c}), picks)), -1.0 / static_cast<double>(b));
}

}  // namespace

Tensor cmpm(const Tensor& img, const Tensor& txt, Labels labels_img, Labels labels_txt) {
  require_batch("cmpm", img, txt, labels_img.size());
  if (labels_txt.size() != labels_img.size()) throw ShapeError("cmpm: label lists differ in length");
  return add(cmpm_direction(img, txt, labels_img, labels_txt),
             cmpm_direction(txt, img, labels_txt, labels_img));
}

Tensor cmpm(const Tensor& img, const Tensor& txt, Labels labels) {
  return cmpm(img, txt, labels, labels);
}

Tensor cmpc(const Tensor& img, const Tensor& txt, Labels labels, const Tensor& class_weights) {
  require_batch("cmpc", img, txt, labels.size());
  if (class_weights.rank() != 2 || class_weights.dim(1) != img.dim(1)) {
    throw ShapeError("cmpc: classifier " + shape_string(class_weights.dims()) +
                     " does not match feature width");
  }
  const Tensor unit = l2_normalize_rows(class_weights);
  return add(cmpc_direction(img, txt, labels, unit), cmpc_direction(txt, img, labels, unit));
}

Tensor triplet(const Tensor& s_cf, Labels labels_img, Labels labels_txt, double margin) {
  if (s_cf.rank() != 2 || s_cf.dim(0) != s_cf.dim(1)) {
    throw ShapeError("triplet: similarity matrix must be square, got " + shape_string(s_cf.dims()));
  }
  const std::size_t b = s_cf.dim(0);
  if (labels_img.size() != b || labels_txt.size() != b) throw ShapeError("triplet: label count mismatch");
  const auto s = s_cf.data();
  std::vector<std::size_t> pos(b), neg_text(b), neg_image(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels_img[i] != labels_txt[i]) {
      throw ContractError("triplet: pair " + std::to_string(i) + " is not a matched pair");
    }
    pos[i] = i * b + i;
    // Hardest mismatched text for image i (row), hardest mismatched image for
    // text i (column); strict > keeps the lowest index on ties.
    std::size_t best_t = b, best_i = b;
    for (std::size_t j = 0; j < b; ++j) {
      if (labels_txt[j] != labels_img[i] && (best_t == b || s[i * b + j] > s[i * b + best_t])) best_t = j;
      if (labels_img[j] != labels_txt[i] && (best_i == b || s[j * b + i] > s[best_i * b + i])) best_i = j;
    }
    if (best_t == b || best_i == b) {
      throw ContractError("triplet: pair " + std::to_string(i) + " has no negative in the batch");
    }
    neg_text[i] = i * b + best_t;
    neg_image[i] = best_i * b + i;
  }
  const Tensor flat = reshape(s_cf, {b * b});
  const Tensor positive = gather_rows(flat, pos);
  const Tensor hinge_t = relu(add_scalar(sub(gather_rows(flat, neg_text), positive), margin));
  const Tensor hinge_i = relu(add_scalar(sub(gather_rows(flat, neg_image), positive), margin));
  return scale(add(sum(hinge_t), sum(hinge_i)), 1.0 / static_cast<double>(b));
}

Tensor diversity(const MultiGrainFeatures& v, const MultiGrainFeatures& t) {
  const Tensor* vs[] = {&v.low, &v.middle, &v.high};
  const Tensor* ts[] = {&t.low, &t.middle, &t.high};
  Tensor total;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      const Tensor term = add(cosine(*vs[i], *vs[j]), cosine(*ts[i], *ts[j]));
      total = total.defined() ? add(total, term) : term;
    }
  }
  return total;
}

Tensor compose_total(const Tensor& l_cm, const Tensor& l_c, const Tensor& l_d, double lambda_c,
                     double lambda_d) {
  return add(add(l_cm, scale(l_c, lambda_c)), scale(l_d, lambda_d));
}

Tensor stack_grain(std::span<const MultiGrainFeatures> feats, std::size_t grain) {
  std::vector<Tensor> rows;
  rows.reserve(feats.size());
  for (const auto& f : feats) {
    const Tensor& g = grain == 0 ? f.low : grain == 1 ? f.middle : f.high;
    rows.push_back(reshape(g, {1, g.size()}));
  }
  return concat(rows);
}

LossBreakdown total_loss(const BatchForward& batch, std::span<const Tensor, 3> classifiers,
                         const ModelConfig& cfg) {
  const std::size_t b = batch.labels.size();
  if (batch.images.size() != b || batch.texts.size() != b) {
    throw ContractError("total_loss: inconsistent batch sizes");
  }
  LossBreakdown out;
  for (std::size_t g = 0; g < 3; ++g) {
    const Tensor img = stack_grain(batch.images, g);
    const Tensor txt = stack_grain(batch.texts, g);
    out.cmpm_per_grain[g] = cmpm(img, txt, batch.labels);
    out.cmpc_per_grain[g] = cmpc(img, txt, batch.labels, classifiers[g]);
    const Tensor term = add(out.cmpm_per_grain[g], out.cmpc_per_grain[g]);
    out.l_cm = out.l_cm.defined() ? add(out.l_cm, term) : term;
  }
  out.l_c = triplet(batch.similarities.s_cf, batch.labels, batch.labels, cfg.margin);
  Tensor div;
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor term = diversity(batch.images[i], batch.texts[i]);
    div = div.defined() ? add(div, term) : term;
  }
  out.l_d = scale(div, 1.0 / static_cast<double>(b));
  out.total = compose_total(out.l_cm, out.l_c, out.l_d, cfg.lambda_c, cfg.lambda_d);
  return out;
}

}  // namespace cfine
