#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfine/config.hpp"
#include "cfine/rng.hpp"
#include "cfine/tensor.hpp"

namespace cfine {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape dims;  // may be empty for a scalar
  std::vector<double> data;

  bool operator==(const StoredTensor&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<StoredTensor> tensors;    // model parameters plus meta/config
  std::vector<StoredTensor> optimizer;  // optim/hyper, optim/m/<name>, optim/v/<name>
  std::uint64_t step = 0;
  Rng::State rng{};

  bool operator==(const Checkpoint&) const = default;

  const StoredTensor* find(const std::string& name) const;
  const StoredTensor* find_optimizer(const std::string& name) const;
};

inline constexpr const char* kConfigTensorName = "meta/config";

/// ModelConfig as a flat f64 vector in field declaration order.
StoredTensor config_snapshot(const ModelConfig& cfg);
ModelConfig config_from_snapshot(const StoredTensor& t);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
/// Raises VersionError on an unsupported version and ParseError naming the
/// section on malformed bytes.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cfine
