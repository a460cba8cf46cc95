#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfine/config.hpp"
#include "cfine/samples.hpp"

namespace cfine {

/// What makes one synthetic identity recognizable: a prototype patch planted
/// at a few fixed grid positions, and a private handful of word ids.
struct IdentitySpec {
  std::uint32_t id = 0;
  std::vector<float> proto_patch;               // p_d
  std::vector<std::size_t> signal_positions;    // distinct, < n_v
  std::vector<std::uint16_t> word_ids;          // disjoint across identities, never kPadId

  bool operator==(const IdentitySpec&) const = default;
};

struct Corpus {
  std::uint32_t n_ids = 0;
  std::uint32_t n_v = 0;
  std::uint32_t p_d = 0;
  std::uint32_t n_t = 0;
  std::vector<PairSample> pairs;
  /// Generator metadata; not part of the file format, empty after load.
  std::vector<IdentitySpec> identities;
  std::uint64_t seed = 0;

  /// Equality over everything the file format carries.
  bool same_content(const Corpus& other) const;
};

struct SynthOptions {
  std::size_t signal_patches = 2;
  std::size_t words_per_id = 4;
  std::size_t identity_words_per_text = 3;
  std::size_t filler_words = 8;
  double proto_scale = 1.5;
  double background_sigma = 1.0;
};

/// Deterministic corpus: pairs_per_id matched pairs for each of n_ids
/// identities. Image patches are N(0, background_sigma²) clutter with the
/// identity prototype (plus N(0, noise_sigma²)) at its signal positions.
/// Texts mix identity words with shared filler and are padded to n_t.
Corpus generate(std::size_t n_ids, std::size_t pairs_per_id, double noise_sigma,
                std::uint64_t seed, const ModelConfig& cfg, const SynthOptions& opts = {});

std::vector<std::uint8_t> encode_corpus(const Corpus& c);
Corpus decode_corpus(std::span<const std::uint8_t> bytes);
void save_corpus(const Corpus& c, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace cfine
