#pragma once

#include <cstdint>
#include <vector>

namespace cfine {

inline constexpr std::uint16_t kPadId = 0;

/// A synthetic "image": a grid of n_v raw patch vectors, row-major n_v × p_d.
struct ImageSample {
  std::vector<float> patches;
  std::uint32_t identity = 0;

  bool operator==(const ImageSample&) const = default;
};

/// Token ids, at most n_t of them. Id 0 (kPadId) marks padding.
struct TextSample {
  std::vector<std::uint16_t> token_ids;
  std::uint32_t identity = 0;

  bool operator==(const TextSample&) const = default;
};

struct PairSample {
  ImageSample image;
  TextSample text;

  bool operator==(const PairSample&) const = default;
};

}  // namespace cfine
