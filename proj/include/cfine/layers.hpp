#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cfine/rng.hpp"
#include "cfine/tensor.hpp"

namespace cfine {

/// Optimizer groups: encoder weights train at the backbone rate, everything
/// else (decoders, CLS tokens, classifiers) at the head rate.
enum class ParamGroup { kBackbone, kHead };

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamGroup group;
};

using ParamList = std::vector<NamedParam>;

struct LinearParams {
  Tensor weight;  // in × out
  Tensor bias;    // out

  static LinearParams init(std::size_t in, std::size_t out, Rng& rng);
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams init(std::size_t width);
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

struct AttentionParams {
  LinearParams query, key, value, out;

  static AttentionParams init(std::size_t d, Rng& rng);
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

struct MlpParams {
  LinearParams fc1, fc2;

  static MlpParams init(std::size_t d, std::size_t hidden, Rng& rng);
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

Tensor linear(const Tensor& x, const LinearParams& p);
Tensor layer_norm(const Tensor& x, const LayerNormParams& p);
Tensor mlp(const Tensor& x, const MlpParams& p);

/// Multi-head attention with projections. Queries come from `x`, keys and
/// values from `context`; `context_mask[j]` excludes context row j. When
/// `attention_out` is non-null it receives the head-averaged weights.
Tensor attention(const Tensor& x, const Tensor& context, const AttentionParams& p,
                 std::size_t heads, std::span<const bool> context_mask = {},
                 Tensor* attention_out = nullptr);

/// Gaussian-initialized leaf tensor.
Tensor normal_param(Shape dims, double stddev, Rng& rng);

}  // namespace cfine
