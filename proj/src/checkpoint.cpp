#include "cfine/checkpoint.hpp"

#include <limits>

#include "cfine/binary_io.hpp"
#include "cfine/errors.hpp"

namespace cfine {

namespace {

constexpr std::string_view kMagic = "CFCKPT1";
constexpr std::size_t kConfigFields = 16;

void write_tensor(ByteWriter& w, const StoredTensor& t) {
  if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ContractError("checkpoint tensor name too long: " + t.name.substr(0, 32) + "...");
  }
  if (t.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw ContractError("checkpoint tensor " + t.name + " has too many axes");
  }
  if (shape_size(t.dims) != t.data.size()) {
    throw ShapeError("checkpoint tensor " + t.name + ": shape " + shape_string(t.dims) +
                     " does not match " + std::to_string(t.data.size()) + " values");
  }
  w.u16(static_cast<std::uint16_t>(t.name.size()));
  w.bytes(t.name);
  w.u8(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data) w.f64(v);
}

StoredTensor read_tensor(ByteReader& r) {
  StoredTensor t;
  const auto len = r.u16();
  t.name = r.string(len);
  const auto rank = r.u8();
  std::size_t count = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    const auto d = r.u32();
    t.dims.push_back(d);
    count *= d;
    if (count > r.remaining()) r.fail("tensor " + t.name + " declares more values than the file holds");
  }
  if (count * 8 > r.remaining()) r.fail("tensor " + t.name + " is truncated");
  t.data.resize(count);
  for (auto& v : t.data) v = r.f64();
  return t;
}

std::vector<StoredTensor> read_tensor_list(ByteReader& r) {
  const auto n = r.u32();
  std::vector<StoredTensor> out;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(read_tensor(r));
  return out;
}

const StoredTensor* find_in(const std::vector<StoredTensor>& v, const std::string& name) {
  for (const auto& t : v) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

}  // namespace

const StoredTensor* Checkpoint::find(const std::string& name) const { return find_in(tensors, name); }

const StoredTensor* Checkpoint::find_optimizer(const std::string& name) const {
  return find_in(optimizer, name);
}

StoredTensor config_snapshot(const ModelConfig& c) {
  auto z = [](std::size_t v) { return static_cast<double>(v); };
  return {kConfigTensorName,
          {kConfigFields},
          {z(c.d), z(c.n_v), z(c.n_t), z(c.vocab), z(c.p_d), z(c.heads), z(c.enc_depth),
           z(c.mlp_ratio), c.r_v, c.r_t, z(c.m_gld), z(c.k_p), c.margin, c.lambda_c, c.lambda_d,
           z(c.n_classes)}};
}

ModelConfig config_from_snapshot(const StoredTensor& t) {
  if (t.data.size() != kConfigFields) {
    throw ConfigError("config snapshot holds " + std::to_string(t.data.size()) + " fields, expected " +
                      std::to_string(kConfigFields));
  }
  auto z = [&](std::size_t i) {
    const double v = t.data[i];
    if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ConfigError("config snapshot field " + std::to_string(i) + " is not a count");
    }
    return static_cast<std::size_t>(v);
  };
  ModelConfig c;
  c.d = z(0);
  c.n_v = z(1);
  c.n_t = z(2);
  c.vocab = z(3);
  c.p_d = z(4);
  c.heads = z(5);
  c.enc_depth = z(6);
  c.mlp_ratio = z(7);
  c.r_v = t.data[8];
  c.r_t = t.data[9];
  c.m_gld = z(10);
  c.k_p = z(11);
  c.margin = t.data[12];
  c.lambda_c = t.data[13];
  c.lambda_d = t.data[14];
  c.n_classes = z(15);
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(c.version);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) write_tensor(w, t);
  w.u32(static_cast<std::uint32_t>(c.optimizer.size()));
  for (const auto& t : c.optimizer) write_tensor(w, t);
  w.u64(c.step);
  for (auto s : c.rng) w.u64(s);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.section("header");
  if (bytes.empty()) r.fail("missing header (empty file)");
  r.expect(kMagic);
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(c.version) +
                       " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  r.section("tensors");
  c.tensors = read_tensor_list(r);
  r.section("optimizer");
  c.optimizer = read_tensor_list(r);
  r.section("step");
  c.step = r.u64();
  r.section("rng");
  for (auto& s : c.rng) s = r.u64();
  if (!r.at_end()) r.fail("trailing bytes after the RNG state");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace cfine
