#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "doctest.h"

#include "cfine/config.hpp"
#include "cfine/errors.hpp"
#include "cfine/ops.hpp"
#include "cfine/selection.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cfine;
using cfine::testing::to_vec;

namespace {

// An encoder output whose last attention row 0 carries `scores`.
EncodedModality fake_encoding(const std::vector<double>& scores, std::vector<bool> masked,
                              std::size_t d = 3) {
  const std::size_t n = scores.size();
  std::vector<double> attn((n + 1) * (n + 1), 0.0);
  for (std::size_t j = 0; j < n; ++j) attn[1 + j] = scores[j];
  std::vector<double> out((n + 1) * d);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(i);
  EncodedModality e;
  e.output = Tensor({n + 1, d}, out, true);
  e.global = Tensor({d}, {out.begin(), out.begin() + static_cast<std::ptrdiff_t>(d)});
  e.locals = Tensor({n, d}, {out.begin() + static_cast<std::ptrdiff_t>(d), out.end()});
  e.attn_last = Tensor({n + 1, n + 1}, attn);
  e.pad_mask = std::move(masked);
  return e;
}

}  // namespace

TEST_CASE("selection count is the ceiling of ratio times length") {
  CHECK(selection_count(0.1, 16) == 2);
  CHECK(selection_count(0.2, 12) == 3);
  CHECK(selection_count(0.1, 30) == 3);
  CHECK(selection_count(0.1, 10) == 1);
  CHECK(selection_count(0.5, 1) == 1);
  CHECK(selection_count(0.25, 8) == 2);
}

TEST_CASE("selection example: scores 0.1 0.4 0.3 0.2 with K = 1") {
  const auto enc = fake_encoding({0.1, 0.4, 0.3, 0.2}, std::vector<bool>(4, false));
  const auto sel = select_tokens(enc, 0.25);
  CHECK(sel.indices == std::vector<std::size_t>{1, 2});
  CHECK(sel.high == std::vector<std::size_t>{1});
  CHECK(sel.middle == std::vector<std::size_t>{2});
  // Row 2 of the output is local token 1.
  CHECK(to_vec(sel.features_high) == std::vector<double>{6, 7, 8});
  CHECK(to_vec(sel.features_middle) == std::vector<double>{9, 10, 11});
}

TEST_CASE("ties go to the lower position") {
  const auto enc = fake_encoding({0.2, 0.2, 0.2, 0.2}, std::vector<bool>(4, false));
  const auto sel = select_tokens(enc, 0.5);
  CHECK(sel.indices == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("padding is never selected") {
  const auto enc = fake_encoding({0.9, 0.1, 0.8, 0.05}, {true, false, false, false});
  const auto sel = select_tokens(enc, 0.25);
  CHECK(sel.indices == std::vector<std::size_t>{2, 1});
  const auto tight = fake_encoding({0.9, 0.1, 0.8, 0.05}, {true, true, true, false});
  CHECK_THROWS_AS(select_tokens(tight, 0.25), ContractError);
}

TEST_CASE("selection agrees with a full-sort oracle on random and tied scores") {
  Rng rng(11);
  int agreed = 0, run = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(rng.below(20));
    std::vector<double> s(n);
    const bool tied = trial % 2 == 0;
    for (auto& v : s) v = tied ? static_cast<double>(rng.below(4)) / 4.0 : rng.uniform();
    std::vector<bool> masked(n, false);
    for (std::size_t i = 0; i < n; ++i) masked[i] = rng.uniform() < 0.2;
    const std::size_t live = static_cast<std::size_t>(std::count(masked.begin(), masked.end(), false));
    if (live == 0) continue;
    const std::size_t count = std::max<std::size_t>(1, live / 2);
    ++run;
    agreed += top_unmasked(s, masked, count) == oracle::top_by_sort(s, masked, count) ? 1 : 0;
  }
  CHECK(run > 900);
  CHECK(agreed == run);
}

TEST_CASE("selection is invariant to strictly increasing score transforms") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 10;
    std::vector<double> s(n);
    for (auto& v : s) v = static_cast<double>(rng.below(5)) * 0.1 + 0.01;
    std::vector<double> t(n);
    std::transform(s.begin(), s.end(), t.begin(), [](double x) { return std::exp(3.0 * x) + 7.0; });
    const std::vector<bool> none(n, false);
    CHECK(top_unmasked(s, none, 4) == top_unmasked(t, none, 4));
  }
}

TEST_CASE("selected features keep the gradient path to the encoder output") {
  auto enc = fake_encoding({0.1, 0.4, 0.3, 0.2}, std::vector<bool>(4, false));
  // Route locals through the output so gradients reach a leaf.
  enc.locals = slice_rows(enc.output, 1, 5);
  const auto sel = select_tokens(enc, 0.25);
  sum(sel.features).backward();
  const auto g = enc.output.grad();
  CHECK(g == std::vector<double>{0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0});
}

TEST_CASE("selection examples with 2K = 2") {
  CHECK(top_unmasked(std::vector<double>{0.1, 0.4, 0.2, 0.3}, {}, 2) == std::vector<std::size_t>{1, 3});
  CHECK(top_unmasked(std::vector<double>{0.5, 0.5, 0.1}, {}, 2) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("split examples") {
  const auto enc = fake_encoding({0.1, 0.4, 0.2, 0.3}, std::vector<bool>(4, false));
  const auto sel = select_tokens(enc, 0.5);
  CHECK(sel.indices == std::vector<std::size_t>{1, 3, 2, 0});
  CHECK(sel.high == std::vector<std::size_t>{1, 3});
  CHECK(sel.middle == std::vector<std::size_t>{2, 0});
  const auto [high, middle] = split(sel);
  CHECK(to_vec(high) == std::vector<double>{6, 7, 8, 12, 13, 14});
  CHECK(to_vec(middle) == std::vector<double>{9, 10, 11, 3, 4, 5});

  std::vector<double> s(10, 0.0);
  s[5] = 0.9;
  s[9] = 0.8;
  const auto one = select_tokens(fake_encoding(s, std::vector<bool>(10, false)), 0.1);
  CHECK(one.high == std::vector<std::size_t>{5});
  CHECK(one.middle == std::vector<std::size_t>{9});

  const auto tied = select_tokens(fake_encoding(std::vector<double>(6, 0.3), std::vector<bool>(6, false)), 0.3);
  CHECK(tied.high == std::vector<std::size_t>{0, 1});
  CHECK(tied.middle == std::vector<std::size_t>{2, 3});
}
