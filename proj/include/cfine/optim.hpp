#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cfine/layers.hpp"

namespace cfine {

/// Linear warmup over the first `warmup_steps`, then a ×`decay_factor` drop at
/// each epoch listed in `decay_epochs` (0-based epoch index at which the drop
/// takes effect).
struct LrSchedule {
  std::uint64_t warmup_steps = 0;
  std::uint64_t steps_per_epoch = 1;
  std::vector<std::uint64_t> decay_epochs;
  double decay_factor = 0.1;

  /// Multiplier on the group rate for 0-based step `step`.
  double multiplier(std::uint64_t step) const;

  /// Warmup over `warmup_frac` of all steps; decay points at epochs 20, 25
  /// and 35 of 50, scaled to `epochs`.
  static LrSchedule rescaled(std::size_t epochs, std::uint64_t steps_per_epoch, double warmup_frac);
};

struct AdamOptions {
  double lr_backbone = 1e-3;
  double lr_head = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LrSchedule schedule;
};

/// Adam with bias correction and two learning-rate groups. Moments are kept
/// per parameter in the order of the ParamList given at construction.
class Adam {
 public:
  Adam(ParamList params, AdamOptions opts);

  /// Applies one update from the parameters' current grads (missing grads
  /// count as zero), then advances the step counter. A non-finite gradient
  /// raises NumericError naming the parameter, before anything is modified.
  void step();
  void zero_grad();

  double current_lr(ParamGroup group) const;

  const ParamList& params() const { return params_; }
  const AdamOptions& options() const { return opts_; }
  std::uint64_t step_count() const { return step_; }

  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_step_count(std::uint64_t s) { step_ = s; }

 private:
  ParamList params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_ = 0;
};

}  // namespace cfine
