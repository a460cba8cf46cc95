#include "cfine/diagnostics.hpp"

#include <vector>

#include "cfine/model.hpp"
#include "cfine/rng.hpp"
#include "cfine/synth_data.hpp"

namespace cfine {

ModelConfig small_gradcheck_config() {
  ModelConfig c;
  c.d = 8;
  c.n_v = 8;
  c.n_t = 6;
  c.p_d = 8;
  return c;
}

GradCheckReport check_loss_gradients(const ModelConfig& cfg, std::uint64_t seed, GradCheckOptions opts) {
  Rng rng(seed);
  const Model model = Model::create(cfg, rng);
  const Corpus corpus = generate(2, 1, 0.05, seed + 1, cfg);
  std::vector<const PairSample*> batch = {&corpus.pairs[0], &corpus.pairs[1]};

  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  return grad_check_params([&] { return model.loss(batch).total; }, params, opts);
}

}  // namespace cfine
