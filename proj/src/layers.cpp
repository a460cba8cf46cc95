#include "cfine/layers.hpp"

#include <cmath>

#include "cfine/ops.hpp"

namespace cfine {

Tensor normal_param(Shape dims, double stddev, Rng& rng) {
  std::vector<double> v(shape_size(dims));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor(std::move(dims), std::move(v), true);
}

LinearParams LinearParams::init(std::size_t in, std::size_t out, Rng& rng) {
  return {normal_param({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng),
          Tensor::zeros({out}, true)};
}

void LinearParams::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  out.push_back({prefix + ".weight", weight, group});
  out.push_back({prefix + ".bias", bias, group});
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

void LayerNormParams::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  out.push_back({prefix + ".gain", gain, group});
  out.push_back({prefix + ".bias", bias, group});
}

AttentionParams AttentionParams::init(std::size_t d, Rng& rng) {
  auto q = LinearParams::init(d, d, rng);
  auto k = LinearParams::init(d, d, rng);
  auto v = LinearParams::init(d, d, rng);
  auto o = LinearParams::init(d, d, rng);
  return {std::move(q), std::move(k), std::move(v), std::move(o)};
}

void AttentionParams::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  query.collect(out, prefix + ".query", group);
  key.collect(out, prefix + ".key", group);
  value.collect(out, prefix + ".value", group);
  this->out.collect(out, prefix + ".out", group);
}

MlpParams MlpParams::init(std::size_t d, std::size_t hidden, Rng& rng) {
  auto fc1 = LinearParams::init(d, hidden, rng);
  auto fc2 = LinearParams::init(hidden, d, rng);
  return {std::move(fc1), std::move(fc2)};
}

void MlpParams::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  fc1.collect(out, prefix + ".fc1", group);
  fc2.collect(out, prefix + ".fc2", group);
}

Tensor linear(const Tensor& x, const LinearParams& p) { return add_rowwise(matmul(x, p.weight), p.bias); }

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) { return layer_norm(x, p.gain, p.bias); }

Tensor mlp(const Tensor& x, const MlpParams& p) { return linear(gelu(linear(x, p.fc1)), p.fc2); }

Tensor attention(const Tensor& x, const Tensor& context, const AttentionParams& p,
                 std::size_t heads, std::span<const bool> context_mask, Tensor* attention_out) {
  auto res = multi_head_attention(linear(x, p.query), linear(context, p.key),
                                  linear(context, p.value), heads, context_mask);
  if (attention_out) *attention_out = res.head_mean;
  return linear(res.values, p.out);
}

}  // namespace cfine
