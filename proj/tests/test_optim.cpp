#include <cmath>

#include "doctest.h"

#include "cfine/errors.hpp"
#include "cfine/ops.hpp"
#include "cfine/optim.hpp"

using namespace cfine;

namespace {

ParamList scalar_param(double value, ParamGroup group = ParamGroup::kBackbone) {
  return {{"w", Tensor::vector({value}, true), group}};
}

AdamOptions plain(double lr) {
  AdamOptions o;
  o.lr_backbone = lr;
  o.lr_head = lr;
  return o;
}

}  // namespace

TEST_CASE("one Adam step matches the hand-applied update") {
  auto params = scalar_param(0.5);
  Adam adam(params, plain(1e-3));
  auto& w = params[0].tensor;
  // loss = 3w, so g = 3.
  scale(w, 3.0).backward();
  adam.step();
  const double g = 3.0;
  const double m = 0.1 * g, v = 0.001 * g * g;
  const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
  const double expected = 0.5 - 1e-3 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(w[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(adam.step_count() == 1);

  // Second step with g = -1.
  adam.zero_grad();
  scale(w, -1.0).backward();
  adam.step();
  const double m2 = 0.9 * m + 0.1 * -1.0, v2 = 0.999 * v + 0.001 * 1.0;
  const double expected2 = expected - 1e-3 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(w[0] == doctest::Approx(expected2).epsilon(1e-15));
}

TEST_CASE("zero gradients leave parameters unchanged") {
  auto params = scalar_param(0.25);
  params.push_back({"m", Tensor::matrix(2, 2, {1, 2, 3, 4}, true), ParamGroup::kHead});
  Adam adam(params, plain(1e-2));
  for (int i = 0; i < 5; ++i) adam.step();
  CHECK(params[0].tensor[0] == 0.25);
  CHECK(std::vector<double>(params[1].tensor.data().begin(), params[1].tensor.data().end()) ==
        std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("groups use their own learning rate") {
  ParamList params{{"a", Tensor::vector({0.0}, true), ParamGroup::kBackbone},
                   {"b", Tensor::vector({0.0}, true), ParamGroup::kHead}};
  AdamOptions o;
  o.lr_backbone = 1e-3;
  o.lr_head = 1e-1;
  Adam adam(params, o);
  add(params[0].tensor, params[1].tensor).backward();
  adam.step();
  // First Adam step moves each coordinate by almost exactly lr.
  CHECK(params[0].tensor[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(params[1].tensor[0] == doctest::Approx(-1e-1).epsilon(1e-6));
}

TEST_CASE("non-finite gradients abort before any update") {
  auto params = scalar_param(1e-300);
  params.push_back({"other", Tensor::vector({2.0}, true), ParamGroup::kHead});
  Adam adam(params, plain(1e-3));
  add(scale(scale(params[0].tensor, 1e300), 1e300), params[1].tensor).backward();
  CHECK_THROWS_AS(adam.step(), NumericError);
  CHECK(params[1].tensor[0] == 2.0);
  CHECK(adam.step_count() == 0);
}

TEST_CASE("warmup then step decay") {
  LrSchedule s;
  s.warmup_steps = 4;
  s.steps_per_epoch = 2;
  s.decay_epochs = {5, 7};
  CHECK(s.multiplier(0) == 0.25);
  CHECK(s.multiplier(3) == 1.0);
  CHECK(s.multiplier(4) == 1.0);
  CHECK(s.multiplier(9) == 1.0);             // epoch 4
  CHECK(s.multiplier(10) == doctest::Approx(0.1));   // epoch 5
  CHECK(s.multiplier(14) == doctest::Approx(0.01));  // epoch 7
}

TEST_CASE("decay points scale with the epoch budget") {
  const auto s50 = LrSchedule::rescaled(50, 10, 0.1);
  CHECK(s50.decay_epochs == std::vector<std::uint64_t>{20, 25, 35});
  CHECK(s50.warmup_steps == 50);
  const auto s150 = LrSchedule::rescaled(150, 2, 0.1);
  CHECK(s150.decay_epochs == std::vector<std::uint64_t>{60, 75, 105});
  CHECK(s150.warmup_steps == 30);
  const auto none = LrSchedule::rescaled(10, 3, 0.0);
  CHECK(none.warmup_steps == 0);
  CHECK(none.multiplier(0) == 1.0);
}
