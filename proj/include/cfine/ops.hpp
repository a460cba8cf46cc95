#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfine/tensor.hpp"

namespace cfine {

// Differentiable tensor operations. Unless noted otherwise, binary
// elementwise ops require identical shapes (no implicit broadcasting) and
// throw ShapeError on mismatch.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape dims);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
/// m[r, c] + row[c] for an R×C matrix and a length-C vector.
Tensor add_rowwise(const Tensor& m, const Tensor& row);

Tensor relu(const Tensor& a);
/// Exact GELU, x·Φ(x).
Tensor gelu(const Tensor& a);

/// Concatenation along axis 0. All inputs must agree on the trailing dims.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
/// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
/// Sub-tensors along axis 0 picked by index. Indices are constants for
/// differentiation: gradient flows only into the gathered values.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis);
Tensor mean_axis(const Tensor& a, std::size_t axis);

/// Numerically stable softmax along `axis` (max subtraction).
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

/// Normalizes over the last axis, then applies gain and bias (both of the
/// last-axis length).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Each row scaled to unit L2 norm. A zero row raises NumericError naming it.
Tensor l2_normalize_rows(const Tensor& a);
/// Cosine similarity of two vectors (any shape with equal size).
Tensor cosine(const Tensor& a, const Tensor& b);
/// Row-by-row cosine of two R×C matrices, giving a length-R vector.
Tensor cosine_rows(const Tensor& a, const Tensor& b);

struct AttentionOutput {
  Tensor values;      // Lq × d, heads concatenated along columns
  Tensor head_mean;   // Lq × Lk post-softmax weights averaged over heads, no grad
};

/// Scaled dot-product attention over `heads` column groups of q/k/v.
/// `key_mask[j] == true` removes key j: it receives exactly zero weight.
/// An empty mask means nothing is masked.
AttentionOutput multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::size_t heads, std::span<const bool> key_mask = {});

/// Indices sorting `values` descending; ties keep the lower index first.
std::vector<std::size_t> argsort_descending(std::span<const double> values);

}  // namespace cfine
