#include "cfine/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "cfine/errors.hpp"
#include "cfine/retrieval.hpp"

namespace cfine {

namespace {

constexpr const char* kHyperName = "optim/hyper";

StoredTensor store(const std::string& name, Shape dims, std::vector<double> data) {
  return {name, std::move(dims), std::move(data)};
}

std::vector<double> hyper_values(const AdamOptions& o) {
  const auto& s = o.schedule;
  std::vector<double> h = {o.lr_backbone,
                           o.lr_head,
                           o.beta1,
                           o.beta2,
                           o.eps,
                           static_cast<double>(s.warmup_steps),
                           static_cast<double>(s.steps_per_epoch),
                           s.decay_factor};
  for (auto e : s.decay_epochs) h.push_back(static_cast<double>(e));
  return h;
}

AdamOptions hyper_from_values(const std::vector<double>& h) {
  if (h.size() < 8) throw ConfigError("optimizer hyperparameters truncated in checkpoint");
  AdamOptions o;
  o.lr_backbone = h[0];
  o.lr_head = h[1];
  o.beta1 = h[2];
  o.beta2 = h[3];
  o.eps = h[4];
  o.schedule.warmup_steps = static_cast<std::uint64_t>(h[5]);
  o.schedule.steps_per_epoch = static_cast<std::uint64_t>(h[6]);
  o.schedule.decay_factor = h[7];
  for (std::size_t i = 8; i < h.size(); ++i) o.schedule.decay_epochs.push_back(static_cast<std::uint64_t>(h[i]));
  return o;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::string format_metrics(const EpochMetrics& m) {
  std::ostringstream os;
  os << m.epoch << std::setprecision(6) << std::fixed;
  for (double v : {m.l_cm, m.l_c, m.l_d, m.total}) os << '\t' << v;
  os << std::setprecision(2);
  for (double v : {m.rank1, m.rank5, m.rank10}) os << '\t' << v;
  return os.str();
}

std::uint64_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  return n / batch_size + (n % batch_size >= 2 ? 1 : 0);
}

TrainState TrainState::create(const TrainConfig& cfg, std::uint64_t seed, std::uint64_t per_epoch) {
  cfg.validate();
  Rng rng(seed);
  Model model = Model::create(cfg.model, rng);
  AdamOptions opts;
  opts.lr_backbone = cfg.lr_backbone;
  opts.lr_head = cfg.lr_head;
  opts.schedule = LrSchedule::rescaled(cfg.epochs, per_epoch, cfg.warmup_frac);
  Adam adam(model.parameters(), opts);
  return TrainState{std::move(model), std::move(adam), rng};
}

Checkpoint TrainState::checkpoint() const {
  Checkpoint c;
  c.tensors.push_back(config_snapshot(model.config()));
  for (const auto& p : model.parameters()) {
    const auto v = p.tensor.data();
    c.tensors.push_back(store(p.name, p.tensor.dims(), {v.begin(), v.end()}));
  }
  const auto h = hyper_values(optimizer.options());
  c.optimizer.push_back(store(kHyperName, {h.size()}, h));
  const auto& params = optimizer.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.optimizer.push_back(store("optim/m/" + params[i].name, params[i].tensor.dims(), optimizer.first_moments()[i]));
    c.optimizer.push_back(store("optim/v/" + params[i].name, params[i].tensor.dims(), optimizer.second_moments()[i]));
  }
  c.step = optimizer.step_count();
  c.rng = rng.state();
  return c;
}

TrainState TrainState::from_checkpoint(const Checkpoint& ckpt) {
  Model model = model_from_checkpoint(ckpt);
  const auto* hyper = ckpt.find_optimizer(kHyperName);
  if (!hyper) throw ConfigError("checkpoint has no optimizer hyperparameters (" + std::string(kHyperName) + ")");
  Adam adam(model.parameters(), hyper_from_values(hyper->data));
  const auto& params = adam.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = ckpt.find_optimizer("optim/m/" + params[i].name);
    const auto* v = ckpt.find_optimizer("optim/v/" + params[i].name);
    if (!m || !v || m->data.size() != params[i].tensor.size() || v->data.size() != params[i].tensor.size()) {
      throw ConfigError("checkpoint optimizer moments missing or misshapen for " + params[i].name);
    }
    adam.first_moments()[i] = m->data;
    adam.second_moments()[i] = v->data;
  }
  adam.set_step_count(ckpt.step);
  return TrainState{std::move(model), std::move(adam), Rng::from_state(ckpt.rng)};
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  const auto* snap = ckpt.find(kConfigTensorName);
  if (!snap) throw ConfigError("checkpoint has no config snapshot (" + std::string(kConfigTensorName) + ")");
  Rng scratch(0);
  Model model = Model::create(config_from_snapshot(*snap), scratch);
  restore_parameters(model, ckpt);
  return model;
}

void restore_parameters(Model& model, const Checkpoint& ckpt) {
  if (const auto* snap = ckpt.find(kConfigTensorName)) {
    if (snap->data != config_snapshot(model.config()).data) {
      throw ConfigError("checkpoint config does not match the model config");
    }
  }
  for (auto& p : model.parameters()) {
    const auto* t = ckpt.find(p.name);
    if (!t) throw ConfigError("checkpoint is missing parameter " + p.name);
    if (t->dims != p.tensor.dims()) {
      throw ConfigError("config mismatch: parameter " + p.name + " stored as " + shape_string(t->dims) +
                        ", model expects " + shape_string(p.tensor.dims()));
    }
    std::copy(t->data.begin(), t->data.end(), p.tensor.mutable_data().begin());
  }
}

TrainResult train(const Corpus& corpus, const TrainConfig& cfg, std::uint64_t seed, const TrainOptions& opts) {
  cfg.validate();
  const std::size_t n = corpus.pairs.size();
  std::set<std::uint32_t> ids;
  for (const auto& p : corpus.pairs) {
    ids.insert(p.image.identity);
    if (p.image.identity >= cfg.model.n_classes) {
      throw ConfigError("identity " + std::to_string(p.image.identity) + " exceeds n_classes=" +
                        std::to_string(cfg.model.n_classes));
    }
  }
  if (ids.size() < 2) throw ConfigError("train: corpus needs at least 2 identities");
  if (cfg.batch_size > n) {
    throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) + " exceeds corpus size " +
                      std::to_string(n));
  }
  if (corpus.n_v != cfg.model.n_v || corpus.p_d != cfg.model.p_d || corpus.n_t != cfg.model.n_t) {
    throw ConfigError("train: corpus dimensions do not match the model config");
  }

  TrainResult result{TrainState::create(cfg, seed, steps_per_epoch(n, cfg.batch_size)), {}, {}};
  auto& st = result.state;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (opts.max_steps && st.optimizer.step_count() >= *opts.max_steps) break;
    std::iota(order.begin(), order.end(), std::size_t{0});
    st.rng.shuffle(order);
    std::vector<double> cm, c, d, tot;
    bool stopped = false;

    for (std::size_t begin = 0; begin + 2 <= n; begin += cfg.batch_size) {
      if (opts.max_steps && st.optimizer.step_count() >= *opts.max_steps) {
        stopped = true;
        break;
      }
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      std::vector<const PairSample*> batch;
      std::set<std::uint32_t> batch_ids;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&corpus.pairs[order[i]]);
        batch_ids.insert(corpus.pairs[order[i]].image.identity);
      }
      if (batch_ids.size() < 2) continue;

      const auto step = st.optimizer.step_count();
      try {
        st.optimizer.zero_grad();
        const LossBreakdown loss = st.model.loss(batch);
        loss.total.backward();
        st.optimizer.step();
        cm.push_back(loss.l_cm.item());
        c.push_back(loss.l_c.item());
        d.push_back(loss.l_d.item());
        tot.push_back(loss.total.item());
        result.step_losses.push_back(loss.total.item());
      } catch (const NumericError& e) {
        throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
      }
    }
    if (tot.empty() && stopped) break;

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.l_cm = mean_of(cm);
    m.l_c = mean_of(c);
    m.l_d = mean_of(d);
    m.total = mean_of(tot);
    if (opts.evaluate_each_epoch) {
      const auto r = evaluate(st.model, corpus);
      m.rank1 = r.rank1;
      m.rank5 = r.rank5;
      m.rank10 = r.rank10;
    }
    result.epochs.push_back(m);
    if (opts.log) *opts.log << format_metrics(m) << '\n' << std::flush;
    if (stopped) break;
  }
  return result;
}

}  // namespace cfine
