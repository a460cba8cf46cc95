#include "cfine/optim.hpp"

#include <algorithm>
#include <cmath>

#include "cfine/errors.hpp"

namespace cfine {

double LrSchedule::multiplier(std::uint64_t step) const {
  if (step < warmup_steps) {
    return static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::uint64_t epoch = step / std::max<std::uint64_t>(steps_per_epoch, 1);
  double m = 1.0;
  for (auto e : decay_epochs) {
    if (epoch >= e) m *= decay_factor;
  }
  return m;
}

LrSchedule LrSchedule::rescaled(std::size_t epochs, std::uint64_t steps_per_epoch, double warmup_frac) {
  LrSchedule s;
  s.steps_per_epoch = std::max<std::uint64_t>(steps_per_epoch, 1);
  const double total = static_cast<double>(epochs) * static_cast<double>(s.steps_per_epoch);
  s.warmup_steps = static_cast<std::uint64_t>(std::ceil(warmup_frac * total - 1e-9));
  for (double frac : {20.0 / 50.0, 25.0 / 50.0, 35.0 / 50.0}) {
    s.decay_epochs.push_back(static_cast<std::uint64_t>(std::llround(frac * static_cast<double>(epochs))));
  }
  return s;
}

Adam::Adam(ParamList params, AdamOptions opts) : params_(std::move(params)), opts_(std::move(opts)) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

double Adam::current_lr(ParamGroup group) const {
  const double base = group == ParamGroup::kBackbone ? opts_.lr_backbone : opts_.lr_head;
  return base * opts_.schedule.multiplier(step_);
}

void Adam::step() {
  std::vector<std::vector<double>> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    grads.push_back(p.tensor.grad());
    for (double g : grads.back()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }

  const double t = static_cast<double>(step_ + 1);
  const double c1 = 1.0 - std::pow(opts_.beta1, t);
  const double c2 = 1.0 - std::pow(opts_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const double lr = current_lr(params_[i].group);
    auto data = params_[i].tensor.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      m[k] = opts_.beta1 * m[k] + (1.0 - opts_.beta1) * g[k];
      v[k] = opts_.beta2 * v[k] + (1.0 - opts_.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      data[k] -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
  ++step_;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace cfine
