#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"

#include "cfine/binary_io.hpp"
#include "cfine/checkpoint.hpp"
#include "cfine/errors.hpp"
#include "cfine/retrieval.hpp"
#include "cfine/trainer.hpp"

using namespace cfine;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cfine_" + name)).string();
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 4;
  return c;
}

Checkpoint short_run(std::uint64_t steps) {
  const auto cfg = quick_config();
  const auto corpus = generate(4, 4, 0.05, 61, cfg.model);
  TrainOptions opts;
  opts.max_steps = steps;
  opts.evaluate_each_epoch = false;
  return train(corpus, cfg, 62, opts).state.checkpoint();
}

std::string error_of(std::span<const std::uint8_t> bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("hand-built one-tensor checkpoint parses") {
  ByteWriter w;
  w.bytes("CFCKPT1");
  w.u32(1);  // version
  w.u32(1);  // tensor count
  w.u16(3);
  w.bytes("abc");
  w.u8(2);
  w.u32(2);
  w.u32(1);
  w.f64(1.5);
  w.f64(-0.25);
  w.u32(0);  // optimizer tensors
  w.u64(17);
  for (std::uint64_t s : {1u, 2u, 3u, 4u}) w.u64(s);
  const auto c = decode_checkpoint(w.buffer());
  REQUIRE(c.tensors.size() == 1);
  const auto* t = c.find("abc");
  REQUIRE(t != nullptr);
  CHECK(t->dims == Shape{2, 1});
  CHECK(t->data == std::vector<double>{1.5, -0.25});
  CHECK(c.optimizer.empty());
  CHECK(c.step == 17);
  CHECK(c.rng == Rng::State{1, 2, 3, 4});
  CHECK(encode_checkpoint(c) == w.buffer());
}

TEST_CASE("checkpoint round trip is bitwise") {
  const auto c = short_run(3);
  const auto bytes = encode_checkpoint(c);
  const auto back = decode_checkpoint(bytes);
  CHECK(back == c);
  CHECK(encode_checkpoint(back) == bytes);

  const auto path = temp_path("ckpt_roundtrip.bin");
  save_checkpoint(c, path);
  CHECK(read_file_bytes(path) == bytes);
  CHECK(load_checkpoint(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("restored models score probes identically") {
  const auto c = short_run(2);
  const auto original = TrainState::from_checkpoint(c);
  const auto restored = model_from_checkpoint(decode_checkpoint(encode_checkpoint(c)));
  const auto probes = generate(5, 2, 0.05, 63, original.model.config());
  const auto a = similarity_matrix(extract_features(original.model, probes));
  const auto b = similarity_matrix(extract_features(restored, probes));
  CHECK(a == b);
}

TEST_CASE("train state survives a checkpoint cycle") {
  const auto c = short_run(3);
  const auto state = TrainState::from_checkpoint(c);
  CHECK(state.checkpoint() == c);
  CHECK(state.optimizer.step_count() == 3);
}

TEST_CASE("mismatched model config is a config error") {
  const auto c = short_run(1);
  ModelConfig other = quick_config().model;
  other.d = 16;
  Rng rng(1);
  auto model = Model::create(other, rng);
  CHECK_THROWS_AS(restore_parameters(model, c), ConfigError);

  // Same dims but no snapshot: shapes are still checked.
  auto stripped = c;
  stripped.tensors.erase(stripped.tensors.begin());
  CHECK_THROWS_AS(restore_parameters(model, stripped), ConfigError);
  CHECK_THROWS_AS(model_from_checkpoint(stripped), ConfigError);
}

TEST_CASE("version mismatch and corrupt sections") {
  const auto bytes = encode_checkpoint(short_run(1));

  auto future = bytes;
  future[7] = 2;
  CHECK_THROWS_AS(decode_checkpoint(future), VersionError);

  CHECK(error_of(std::vector<std::uint8_t>{}).find("missing header") != std::string::npos);
  CHECK(error_of(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 4)).find("header") != std::string::npos);
  CHECK(error_of(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 40)).find("tensors section") !=
        std::string::npos);
  CHECK(error_of(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 20)).find("rng section") != std::string::npos);

  // Cut inside the optimizer block: find its start by re-encoding the model part.
  auto c = decode_checkpoint(bytes);
  auto model_only = c;
  model_only.optimizer.clear();
  const std::size_t optimizer_start = encode_checkpoint(model_only).size() - 4 - 8 - 32;
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(optimizer_start) + 10);
  CHECK(error_of(cut).find("optimizer section") != std::string::npos);

  auto trailing = bytes;
  trailing.push_back(1);
  CHECK_THROWS_AS(decode_checkpoint(trailing), ParseError);
}

TEST_CASE("config snapshot round trip") {
  ModelConfig c;
  c.d = 12;
  c.heads = 3;
  c.r_t = 0.3;
  c.lambda_d = 0.7;
  const auto back = config_from_snapshot(config_snapshot(c));
  CHECK(config_snapshot(back) == config_snapshot(c));
  CHECK(back.d == 12);
  CHECK(back.r_t == 0.3);
  auto bad = config_snapshot(c);
  bad.data[0] = 2.5;
  CHECK_THROWS_AS(config_from_snapshot(bad), ConfigError);
}
