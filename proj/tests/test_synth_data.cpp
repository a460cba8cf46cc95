#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "doctest.h"

#include "cfine/binary_io.hpp"
#include "cfine/errors.hpp"
#include "cfine/synth_data.hpp"

using namespace cfine;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cfine_" + name)).string();
}

}  // namespace

TEST_CASE("corpus sizes and labels") {
  const ModelConfig cfg;
  const auto c = generate(8, 4, 0.05, 1, cfg);
  CHECK(c.pairs.size() == 32);
  std::map<std::uint32_t, int> counts;
  for (const auto& p : c.pairs) {
    CHECK(p.image.identity == p.text.identity);
    CHECK(p.image.patches.size() == cfg.n_v * cfg.p_d);
    CHECK(p.text.token_ids.size() == cfg.n_t);
    ++counts[p.image.identity];
  }
  CHECK(counts.size() == 8);
  for (const auto& [id, n] : counts) {
    CHECK(id < 8);
    CHECK(n == 4);
  }
}

TEST_CASE("identity specs satisfy their invariants") {
  const ModelConfig cfg;
  const auto c = generate(8, 2, 0.05, 2, cfg);
  std::set<std::uint16_t> seen_words;
  for (const auto& spec : c.identities) {
    CHECK(spec.proto_patch.size() == cfg.p_d);
    std::set<std::size_t> pos(spec.signal_positions.begin(), spec.signal_positions.end());
    CHECK(pos.size() == spec.signal_positions.size());
    for (auto p : pos) CHECK(p < cfg.n_v);
    for (auto w : spec.word_ids) {
      CHECK(w != kPadId);
      CHECK(w < cfg.vocab);
      CHECK(seen_words.insert(w).second);
    }
  }
}

TEST_CASE("texts draw identity words and shared filler") {
  const ModelConfig cfg;
  const auto c = generate(4, 3, 0.05, 3, cfg);
  for (const auto& p : c.pairs) {
    const auto& words = c.identities[p.text.identity].word_ids;
    int own = 0, live = 0;
    for (auto t : p.text.token_ids) {
      if (t == kPadId) continue;
      ++live;
      const bool is_own = std::find(words.begin(), words.end(), t) != words.end();
      own += is_own ? 1 : 0;
      CHECK((is_own || t <= 8));  // filler ids are 1..8
    }
    CHECK(own == 3);
    CHECK(live >= static_cast<int>(2 * cfg.k_t()));
  }
}

TEST_CASE("noise-free images share their signal patches exactly") {
  const ModelConfig cfg;
  const auto c = generate(3, 2, 0.0, 4, cfg);
  for (const auto& spec : c.identities) {
    const auto& a = c.pairs[spec.id * 2].image.patches;
    const auto& b = c.pairs[spec.id * 2 + 1].image.patches;
    for (auto pos : spec.signal_positions)
      for (std::size_t k = 0; k < cfg.p_d; ++k) {
        CHECK(a[pos * cfg.p_d + k] == b[pos * cfg.p_d + k]);
        CHECK(a[pos * cfg.p_d + k] == spec.proto_patch[k]);
      }
  }
}

TEST_CASE("a linear probe separates noise-free identities from the signal patches") {
  const ModelConfig cfg;
  const auto c = generate(8, 4, 0.0, 5, cfg);
  // Score_c(x) = Σ_pos <x_pos, proto_c> - Σ_pos |proto_c|²/2, over identity c's
  // positions: linear in x with a per-class bias.
  for (const auto& p : c.pairs) {
    std::uint32_t best = 0;
    double best_score = -1e300;
    for (const auto& spec : c.identities) {
      double s = 0.0;
      for (auto pos : spec.signal_positions)
        for (std::size_t k = 0; k < cfg.p_d; ++k) {
          const double w = spec.proto_patch[k];
          s += p.image.patches[pos * cfg.p_d + k] * w - 0.5 * w * w;
        }
      if (s > best_score) {
        best_score = s;
        best = spec.id;
      }
    }
    CHECK(best == p.image.identity);
  }
}

TEST_CASE("generation is deterministic under a seed") {
  const ModelConfig cfg;
  const auto a = encode_corpus(generate(8, 4, 0.05, 77, cfg));
  const auto b = encode_corpus(generate(8, 4, 0.05, 77, cfg));
  const auto other = encode_corpus(generate(8, 4, 0.05, 78, cfg));
  CHECK(a == b);
  CHECK(a != other);
}

TEST_CASE("generation errors") {
  ModelConfig cfg;
  CHECK_THROWS_AS(generate(1, 4, 0.05, 1, cfg), ConfigError);
  CHECK_THROWS_AS(generate(4, 4, -0.1, 1, cfg), ConfigError);
  cfg.vocab = 20;
  CHECK_THROWS_AS(generate(4, 4, 0.05, 1, cfg), ConfigError);
}

TEST_CASE("corpus file round trip") {
  const ModelConfig cfg;
  const auto c = generate(8, 4, 0.05, 9, cfg);
  const auto path = temp_path("corpus_roundtrip.bin");
  save_corpus(c, path);
  const auto back = load_corpus(path);
  CHECK(back.same_content(c));
  CHECK(encode_corpus(back) == read_file_bytes(path));
  std::filesystem::remove(path);
}

TEST_CASE("corpus byte layout") {
  Corpus c;
  c.n_ids = 2;
  c.n_v = 2;
  c.p_d = 1;
  c.n_t = 4;
  c.pairs.push_back({{{1.5f, -2.0f}, 1}, {{7, 3}, 1}});
  const auto bytes = encode_corpus(c);
  CHECK(bytes.size() == 6 + 5 * 4 + 4 + 2 * 4 + 4 * 2);
  CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "CFSYN1");
  CHECK(bytes[6] == 2);    // n_ids
  CHECK(bytes[10] == 1);   // n_pairs
  CHECK(bytes[26] == 1);   // identity
  CHECK(bytes[38] == 7);   // first token id
  CHECK(bytes[42] == 0);   // padded
  const auto back = decode_corpus(bytes);
  CHECK(back.pairs[0].text.token_ids == std::vector<std::uint16_t>{7, 3, 0, 0});
  CHECK(back.pairs[0].image.patches == std::vector<float>{1.5f, -2.0f});
}

TEST_CASE("malformed corpus files raise parse errors with offsets") {
  const ModelConfig cfg;
  auto bytes = encode_corpus(generate(2, 2, 0.05, 10, cfg));

  try {
    decode_corpus(std::vector<std::uint8_t>{});
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("missing header") != std::string::npos);
    CHECK(e.offset() == 0);
  }

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_corpus(truncated), ParseError);

  for (std::size_t cut : {3u, 10u, 30u, 100u}) {
    std::vector<std::uint8_t> head(bytes.begin(), bytes.begin() + cut);
    CHECK_THROWS_AS(decode_corpus(head), ParseError);
  }

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_corpus(bad_magic), ParseError);

  auto bad_id = bytes;
  bad_id[26] = 9;
  try {
    decode_corpus(bad_id);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 30);
  }

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_corpus(trailing), ParseError);
}

TEST_CASE("an empty corpus file on disk is rejected") {
  const auto path = temp_path("corpus_empty.bin");
  { std::FILE* f = std::fopen(path.c_str(), "wb"); std::fclose(f); }
  CHECK_THROWS_AS(load_corpus(path), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_corpus(path), Error);
}
