#include "cfine/synth_data.hpp"

#include <algorithm>
#include <numeric>

#include "cfine/binary_io.hpp"
#include "cfine/errors.hpp"
#include "cfine/rng.hpp"

namespace cfine {

namespace {

constexpr std::string_view kCorpusMagic = "CFSYN1";

}  // namespace

bool Corpus::same_content(const Corpus& o) const {
  return n_ids == o.n_ids && n_v == o.n_v && p_d == o.p_d && n_t == o.n_t && pairs == o.pairs;
}

Corpus generate(std::size_t n_ids, std::size_t pairs_per_id, double noise_sigma,
                std::uint64_t seed, const ModelConfig& cfg, const SynthOptions& opts) {
  if (n_ids < 2) throw ConfigError("generate: need at least 2 identities");
  if (!(noise_sigma >= 0.0)) throw ConfigError("generate: noise_sigma must be non-negative");
  if (opts.signal_patches == 0 || opts.signal_patches > cfg.n_v) {
    throw ConfigError("generate: signal patch count must lie in [1, n_v]");
  }
  const std::size_t needed_vocab = 1 + opts.filler_words + n_ids * opts.words_per_id;
  if (needed_vocab > cfg.vocab) {
    throw ConfigError("generate: vocab of " + std::to_string(cfg.vocab) + " cannot hold " +
                      std::to_string(n_ids) + " disjoint identity vocabularies (needs " +
                      std::to_string(needed_vocab) + ")");
  }
  const std::size_t min_len = std::max<std::size_t>(2 * cfg.k_t(), opts.identity_words_per_text);
  if (min_len > cfg.n_t) throw ConfigError("generate: n_t too short for the selection size");

  Rng rng(seed);
  Corpus c;
  c.n_ids = static_cast<std::uint32_t>(n_ids);
  c.n_v = static_cast<std::uint32_t>(cfg.n_v);
  c.p_d = static_cast<std::uint32_t>(cfg.p_d);
  c.n_t = static_cast<std::uint32_t>(cfg.n_t);
  c.seed = seed;

  // Ids 1..filler_words are shared filler; identity vocabularies follow.
  for (std::size_t id = 0; id < n_ids; ++id) {
    IdentitySpec spec;
    spec.id = static_cast<std::uint32_t>(id);
    for (std::size_t k = 0; k < cfg.p_d; ++k) {
      spec.proto_patch.push_back(static_cast<float>(opts.proto_scale * rng.normal()));
    }
    std::vector<std::size_t> positions(cfg.n_v);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    rng.shuffle(positions);
    spec.signal_positions.assign(positions.begin(),
                                 positions.begin() + static_cast<std::ptrdiff_t>(opts.signal_patches));
    std::sort(spec.signal_positions.begin(), spec.signal_positions.end());
    for (std::size_t w = 0; w < opts.words_per_id; ++w) {
      spec.word_ids.push_back(static_cast<std::uint16_t>(1 + opts.filler_words + id * opts.words_per_id + w));
    }
    c.identities.push_back(std::move(spec));
  }

  for (const auto& spec : c.identities) {
    for (std::size_t rep = 0; rep < pairs_per_id; ++rep) {
      PairSample pair;
      pair.image.identity = spec.id;
      pair.text.identity = spec.id;

      auto& patches = pair.image.patches;
      patches.resize(cfg.n_v * cfg.p_d);
      for (auto& v : patches) v = static_cast<float>(opts.background_sigma * rng.normal());
      for (auto pos : spec.signal_positions) {
        for (std::size_t k = 0; k < cfg.p_d; ++k) {
          const double noise = noise_sigma > 0.0 ? noise_sigma * rng.normal() : 0.0;
          patches[pos * cfg.p_d + k] = static_cast<float>(spec.proto_patch[k] + noise);
        }
      }

      const std::size_t len = min_len + static_cast<std::size_t>(rng.below(cfg.n_t - min_len + 1));
      std::vector<std::uint16_t> words;
      for (std::size_t w = 0; w < opts.identity_words_per_text; ++w) {
        words.push_back(spec.word_ids[rng.below(spec.word_ids.size())]);
      }
      while (words.size() < len) {
        words.push_back(static_cast<std::uint16_t>(1 + rng.below(opts.filler_words)));
      }
      rng.shuffle(words);
      words.resize(cfg.n_t, kPadId);
      pair.text.token_ids = std::move(words);
      c.pairs.push_back(std::move(pair));
    }
  }
  return c;
}

std::vector<std::uint8_t> encode_corpus(const Corpus& c) {
  ByteWriter w;
  w.bytes(kCorpusMagic);
  w.u32(c.n_ids);
  w.u32(static_cast<std::uint32_t>(c.pairs.size()));
  w.u32(c.n_v);
  w.u32(c.p_d);
  w.u32(c.n_t);
  for (const auto& p : c.pairs) {
    if (p.image.patches.size() != static_cast<std::size_t>(c.n_v) * c.p_d) {
      throw ShapeError("encode_corpus: image patch count does not match n_v x p_d");
    }
    if (p.text.token_ids.size() > c.n_t) throw ShapeError("encode_corpus: text longer than n_t");
    w.u32(p.image.identity);
    for (float v : p.image.patches) w.f32(v);
    for (std::size_t i = 0; i < c.n_t; ++i) {
      w.u16(i < p.text.token_ids.size() ? p.text.token_ids[i] : kPadId);
    }
  }
  return w.take();
}

Corpus decode_corpus(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.section("header");
  if (bytes.empty()) r.fail("missing header (empty file)");
  r.expect(kCorpusMagic);
  Corpus c;
  c.n_ids = r.u32();
  const std::uint32_t n_pairs = r.u32();
  c.n_v = r.u32();
  c.p_d = r.u32();
  c.n_t = r.u32();
  const std::size_t per_pair = 4 + static_cast<std::size_t>(c.n_v) * c.p_d * 4 + static_cast<std::size_t>(c.n_t) * 2;
  if (per_pair != 0 && r.remaining() / per_pair < n_pairs) {
    r.fail("header declares " + std::to_string(n_pairs) + " pairs but only " +
           std::to_string(r.remaining()) + " bytes follow");
  }
  r.section("pairs");
  c.pairs.reserve(n_pairs);
  for (std::uint32_t i = 0; i < n_pairs; ++i) {
    PairSample p;
    p.image.identity = r.u32();
    if (p.image.identity >= c.n_ids) {
      r.fail("pair " + std::to_string(i) + " identity " + std::to_string(p.image.identity) +
             " >= n_ids " + std::to_string(c.n_ids));
    }
    p.text.identity = p.image.identity;
    p.image.patches.resize(static_cast<std::size_t>(c.n_v) * c.p_d);
    for (auto& v : p.image.patches) v = r.f32();
    p.text.token_ids.resize(c.n_t);
    for (auto& t : p.text.token_ids) t = r.u16();
    c.pairs.push_back(std::move(p));
  }
  if (!r.at_end()) r.fail("trailing bytes after the last pair");
  return c;
}

void save_corpus(const Corpus& c, const std::string& path) { write_file_bytes(path, encode_corpus(c)); }

Corpus load_corpus(const std::string& path) { return decode_corpus(read_file_bytes(path)); }

}  // namespace cfine
