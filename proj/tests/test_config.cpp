#include <cmath>
#include <set>
#include <string>

#include "doctest.h"

#include "cfine/config.hpp"
#include "cfine/errors.hpp"
#include "cfine/rng.hpp"

using namespace cfine;

TEST_CASE("toy defaults") {
  const TrainConfig c;
  CHECK(c.model.k_v() == 2);
  CHECK(c.model.k_t() == 3);
  CHECK(c.model.effective_k_p() == 2);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config text parsing") {
  const auto c = parse_config(
      "# toy run\n"
      "d = 16\n"
      "  heads=2   # inline comment\n"
      "\n"
      "r_v = 0.25\n"
      "epochs = 7\n"
      "lr_head = 5e-3\n");
  CHECK(c.model.d == 16);
  CHECK(c.model.heads == 2);
  CHECK(c.model.r_v == 0.25);
  CHECK(c.epochs == 7);
  CHECK(c.lr_head == 5e-3);
  CHECK(c.batch_size == TrainConfig{}.batch_size);
}

TEST_CASE("config errors name the line") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("d = 8\nbogus = 1\n").find("line 2") != std::string::npos);
  CHECK(message("d = 8\nbogus = 1\n").find("bogus") != std::string::npos);
  CHECK(message("d = eight\n").find("line 1") != std::string::npos);
  CHECK(message("d 8\n").find("key = value") != std::string::npos);
  CHECK(message("epochs = -3\n") != "");
  CHECK(message("lr_head = 1e-2x\n") != "");
}

TEST_CASE("config round trips through its text form") {
  TrainConfig c;
  c.model.d = 24;
  c.model.r_t = 0.3;
  c.lr_backbone = 1.25e-4;
  c.noise_sigma = 0.1;
  const auto back = parse_config(format_config(c));
  CHECK(format_config(back) == format_config(c));
  CHECK(back.model.r_t == c.model.r_t);
  CHECK(back.lr_backbone == c.lr_backbone);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.model.heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.model.r_t = 0.6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.warmup_frac = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("rng streams are reproducible and restorable") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  auto c = Rng::from_state(a.state());
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == c.normal());
  Rng d(124);
  CHECK(Rng(123).next_u64() != d.next_u64());
}

TEST_CASE("rng distributions") {
  Rng r(5);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < n; ++i) ++counts[r.below(5)];
  for (int k : counts) CHECK(std::abs(k - n / 5) < 400);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  std::vector<int> v{1, 2, 3, 4, 5, 6};
  r.shuffle(v);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 6);
}
