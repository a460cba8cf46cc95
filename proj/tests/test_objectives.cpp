#include <cmath>
#include <vector>

#include "doctest.h"

#include "cfine/errors.hpp"
#include "cfine/grad_check.hpp"
#include "cfine/objectives.hpp"
#include "cfine/ops.hpp"
#include "test_util.hpp"

using namespace cfine;
using cfine::testing::random_tensor;

namespace {

MultiGrainFeatures grains(std::vector<double> l, std::vector<double> m, std::vector<double> h) {
  return {Tensor::vector(std::move(l)), Tensor::vector(std::move(m)), Tensor::vector(std::move(h))};
}

const std::vector<std::uint32_t> kTwoIds{0, 1};

}  // namespace

TEST_CASE("matching loss on a single pair is zero") {
  const auto x = Tensor::matrix(1, 3, {0.2, -1, 4});
  const auto y = Tensor::matrix(1, 3, {1, 1, 1});
  const std::vector<std::uint32_t> label{3};
  // Only the log(q + ε) offset remains.
  CHECK(std::abs(cmpm(x, y, label).item()) < 1e-7);
}

TEST_CASE("matching loss saturates for aligned, orthogonal pairs") {
  const auto x = Tensor::matrix(2, 2, {20, 0, 0, 20});
  const auto y = Tensor::matrix(2, 2, {1, 0, 0, 1});
  CHECK(cmpm(x, scale(y, 20), kTwoIds).item() < 1e-6);
}

TEST_CASE("matching loss is zero when labels and projections are both uniform") {
  const auto x = Tensor::matrix(2, 2, {1, 0, 1, 0});
  const auto y = Tensor::matrix(2, 2, {0, 1, 0, 1});  // every logit 0
  const std::vector<std::uint32_t> same{4, 4};
  CHECK(std::abs(cmpm(x, y, same).item()) < 1e-7);
}

TEST_CASE("matching loss is non-negative and needs a positive per row") {
  Rng rng(41);
  const std::vector<std::uint32_t> labels{0, 1, 0, 2};
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_tensor(rng, {4, 5}, 2.0);
    const auto y = random_tensor(rng, {4, 5}, 2.0);
    CHECK(cmpm(x, y, labels).item() >= -1e-7);
  }
  const std::vector<std::uint32_t> img{0, 1}, txt{0, 0};
  CHECK_THROWS_AS(cmpm(Tensor::full({2, 2}, 1.0), Tensor::full({2, 2}, 1.0), img, txt), ContractError);
}

TEST_CASE("classification loss examples") {
  const auto w = Tensor::matrix(2, 2, {1, 0, 0, 1});
  // Saturated: x̂ along its own class row, orthogonal to the other.
  const auto x = Tensor::matrix(2, 2, {20, 0, 0, 20});
  CHECK(cmpc(x, x, kTwoIds, w).item() < 1e-6);
  // Class rows orthogonal to every x̂ give uniform logits: ln 2 per direction.
  const auto e1 = Tensor::matrix(2, 2, {0, 3, 0, 5});
  CHECK(cmpc(e1, e1, kTwoIds, Tensor::matrix(2, 2, {1, 0, -1, 0})).item() ==
        doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  // Projection of x orthogonal to its partner vanishes: ln C per direction.
  const auto a = Tensor::matrix(2, 2, {1, 0, 1, 0});
  const auto b = Tensor::matrix(2, 2, {0, 1, 0, 1});
  const auto w3 = Tensor::matrix(3, 2, {1, 0, 0, 1, 1, 1});
  CHECK(cmpc(a, b, kTwoIds, w3).item() == doctest::Approx(2 * std::log(3.0)).epsilon(1e-12));
  const std::vector<std::uint32_t> bad{0, 5};
  CHECK_THROWS_AS(cmpc(a, a, bad, w), ContractError);
}

TEST_CASE("triplet loss worked example") {
  const auto s = Tensor::matrix(2, 2, {0.9, 0.5, 0.85, 0.9});
  CHECK(triplet(s, kTwoIds, kTwoIds, 0.2).item() == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(std::abs(triplet(s, kTwoIds, kTwoIds, 0.2).item() - 0.15) < 1e-12);
}

TEST_CASE("triplet loss floor and boundary") {
  const auto easy = Tensor::matrix(2, 2, {0.9, 0.1, 0.2, 0.8});
  CHECK(triplet(easy, kTwoIds, kTwoIds, 0.2).item() == 0.0);
  // Positive equal to the hardest negative in one direction costs α there.
  const auto tie = Tensor::matrix(2, 2, {0.5, 0.5, -1.0, 2.0});
  // pair 0: text side 0.5-0.5+0.2; image side -1-0.5+0.2 < 0.
  // pair 1: text side -1-2+0.2 < 0; image side 0.5-2+0.2 < 0.
  CHECK(triplet(tie, kTwoIds, kTwoIds, 0.2).item() == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("triplet loss picks the hardest negative with lowest-index ties") {
  const std::vector<std::uint32_t> ids{0, 1, 2};
  auto s = Tensor::matrix(3, 3, {1.0, 0.9, 0.9, 0.0, 1.0, 0.95, 0.0, 0.95, 1.0}, true);
  triplet(s, ids, ids, 0.2).backward();
  const auto g = s.grad();
  // Image 0 ties at texts 1 and 2; only text 1 is taken.
  CHECK(g[1] == doctest::Approx(1.0 / 3.0));
  CHECK(g[2] == 0.0);
  // Text 0 ties at images 1 and 2 but its hinge is inactive.
  CHECK(g[3] == 0.0);
  CHECK(g[6] == 0.0);
  CHECK(g[5] == doctest::Approx(2.0 / 3.0));
  CHECK(g[7] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("triplet rejects batches without negatives") {
  const std::vector<std::uint32_t> same{1, 1};
  CHECK_THROWS_AS(triplet(Tensor::matrix(2, 2, {1, 0, 0, 1}), same, same, 0.2), ContractError);
}

TEST_CASE("diversity examples") {
  const auto same = grains({1, 2, 3}, {1, 2, 3}, {1, 2, 3});
  CHECK(diversity(same, same).item() == 12.0);
  const auto ortho = grains({1, 0, 0}, {0, 1, 0}, {0, 0, 1});
  CHECK(diversity(ortho, ortho).item() == 0.0);
  // Pairwise cosine 0.5 among image grains (unit vectors 60° apart), 0 for text.
  const double r = std::sqrt(0.5);
  const auto v = grains({r, r, 0}, {r, 0, r}, {0, r, r});
  CHECK(diversity(v, ortho).item() == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(diversity(grains({0, 0, 0}, {1, 0, 0}, {0, 1, 0}), ortho), NumericError);
}

TEST_CASE("total composition") {
  const auto t = compose_total(Tensor::scalar(1.0), Tensor::scalar(0.1), Tensor::scalar(0.5), 10.0, 0.2);
  CHECK(std::abs(t.item() - 2.1) < 1e-12);
  CHECK(compose_total(Tensor::scalar(1.7), Tensor::scalar(3.0), Tensor::scalar(4.0), 0.0, 0.0).item() == 1.7);
}

TEST_CASE("objective gradients match finite differences") {
  Rng rng(42);
  const std::vector<std::uint32_t> labels{0, 1, 0};
  const auto y = random_tensor(rng, {3, 4});
  const auto w = random_tensor(rng, {2, 4});
  const auto x = random_tensor(rng, {3, 4});
  CHECK(grad_check([&](const Tensor& a) { return cmpm(a, y, labels); }, x).max_rel_error < 1e-6);
  CHECK(grad_check([&](const Tensor& a) { return cmpm(x, a, labels); }, y).max_rel_error < 1e-6);
  CHECK(grad_check([&](const Tensor& a) { return cmpc(a, y, labels, w); }, x).max_rel_error < 1e-6);
  CHECK(grad_check([&](const Tensor& a) { return cmpc(x, y, labels, a); }, w).max_rel_error < 1e-6);
  const std::vector<std::uint32_t> ids{0, 1, 2};
  const auto s = random_tensor(rng, {3, 3});
  CHECK(grad_check([&](const Tensor& a) { return triplet(a, ids, ids, 1.5); }, s).max_rel_error < 1e-6);
  const auto t = grains({1, 2, 0.5}, {0.3, -1, 2}, {2, 2, -1});
  CHECK(grad_check([&](const Tensor& a) { return diversity({a, t.middle, t.high}, t); }, t.low).max_rel_error < 1e-6);
}
