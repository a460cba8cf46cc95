#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cfine/tensor.hpp"

namespace cfine {

struct GradCheckReport {
  /// max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor)
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
  /// Set when the function looks non-smooth near the input (forward and
  /// backward one-sided differences disagree at both h and h/2), so the
  /// central difference cannot be trusted there.
  bool unreliable = false;
  std::vector<std::size_t> unreliable_indices;
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-6;
  /// Magnitude floor in the relative-error denominator.
  double floor = 1e-6;
};

/// Compares the reverse-mode gradient of a scalar function against central
/// differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           GradCheckOptions opts = {});

/// Same comparison over every coordinate of a set of leaf parameters that `f`
/// closes over. Parameter values are restored before returning.
GradCheckReport grad_check_params(const std::function<Tensor()>& f, std::span<Tensor> params,
                                  GradCheckOptions opts = {});

}  // namespace cfine
