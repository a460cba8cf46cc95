#include "cfine/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cfine/errors.hpp"

namespace cfine {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  const Tensor out = f();
  if (out.size() != 1) throw ContractError("grad_check: function must return a scalar");
  const double v = out.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

void compare(GradCheckReport& report, std::size_t index, double analytic,
             const std::function<double(double)>& f_at_offset, const GradCheckOptions& opts) {
  const double h = opts.h;
  const double fp = f_at_offset(h);
  const double fm = f_at_offset(-h);
  const double f0 = f_at_offset(0.0);
  const double numeric = (fp - fm) / (2.0 * h);

  // A kink or jump shows up as an asymmetry between the one-sided slopes that
  // does not shrink with h. For smooth functions it halves with h.
  const double asym = std::abs((fp - f0) / h - (f0 - fm) / h);
  if (asym > 1e-6 * (1.0 + std::abs(numeric))) {
    const double fp2 = f_at_offset(h / 2);
    const double fm2 = f_at_offset(-h / 2);
    const double asym2 = std::abs((fp2 - f0) / (h / 2) - (f0 - fm2) / (h / 2));
    if (asym2 > 0.75 * asym) {
      report.unreliable = true;
      report.unreliable_indices.push_back(index);
    }
  }

  const double abs_err = std::abs(analytic - numeric);
  const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
  const double rel = abs_err / denom;
  report.max_abs_error = std::max(report.max_abs_error, abs_err);
  if (rel > report.max_rel_error || report.checked == 0) {
    report.max_rel_error = std::max(report.max_rel_error, rel);
    report.worst_index = index;
  }
  ++report.checked;
}

}  // namespace

GradCheckReport grad_check_params(const std::function<Tensor()>& f, std::span<Tensor> params,
                                  GradCheckOptions opts) {
  if (!(opts.h > 0.0)) throw ContractError("grad_check: h must be positive");
  for (auto& p : params) {
    if (!p.requires_grad()) throw ContractError("grad_check: parameter without requires_grad");
    p.zero_grad();
  }
  {
    const Tensor loss = f();
    if (loss.size() != 1) throw ContractError("grad_check: function must return a scalar");
    loss.backward();
  }

  GradCheckReport report;
  std::size_t flat = 0;
  for (auto& p : params) {
    const std::vector<double> analytic = p.grad();
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      const double original = values[i];
      auto f_at = [&](double offset) {
        values[i] = original + offset;
        const double v = eval_scalar(f);
        values[i] = original;
        return v;
      };
      compare(report, flat, analytic[i], f_at, opts);
    }
    p.zero_grad();
  }
  report.passed = report.max_rel_error <= opts.tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           GradCheckOptions opts) {
  Tensor leaf(x.dims(), std::vector<double>(x.data().begin(), x.data().end()), true);
  Tensor params[] = {leaf};
  return grad_check_params([&] { return f(leaf); }, params, opts);
}

}  // namespace cfine
