#pragma once

// Checkpoint files. Layout (all integers little-endian):
//
//   8 bytes   magic "SGRIDCK\0"
//   u32       format version
//   u32       length of the JSON config, then the JSON text
//             (model_kind, window, channels, filters, blocks, loss_mode, metadata)
//   u32       number of arrays; per array:
//               u16 name length, name bytes,
//               u32 rank, rank x u32 dims,
//               product(dims) x float32 values
//   u64       FNV-1a hash of every preceding byte
//
// Arrays are the model parameters followed by the batch-norm running
// statistics, in the model's own order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "socialgrid/models.hpp"

namespace socialgrid {

inline constexpr char kCheckpointMagic[8] = {'S', 'G', 'R', 'I', 'D', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double initial_loss = 0.0;
  std::vector<double> loss_history;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Raw decoded contents, before they are matched against a model.
struct CheckpointData {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json config;
  std::vector<NamedArray> arrays;
};

inline std::uint64_t fnv1a(const std::string& bytes, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const noexcept { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > limit_ || pos_ > limit_ - n)
      throw CheckpointError(std::string("checkpoint truncated or corrupt while reading ") + what + " at byte " +
                            std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointData& data) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, data.version);
  const std::string cfg = data.config.dump();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.arrays.size()));
  for (const auto& a : data.arrays) {
    if (a.name.size() > 0xFFFF) throw CheckpointError("array name too long: " + a.name);
    if (shape_size(a.shape) != a.values.size()) throw CheckpointError("array " + a.name + ": shape/value count mismatch");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
    out += a.name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : a.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  detail::put_le<std::uint64_t>(out, fnv1a(out, out.size()));
  return out;
}

/// Parses the byte layout. Checks, in order: magic, version, structure,
/// then the trailing checksum.
inline CheckpointData decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kCheckpointMagic + 4 + 8)
    throw CheckpointError("checkpoint truncated: only " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  const std::size_t body = bytes.size() - 8;
  detail::Reader r(bytes, body);
  r.take(sizeof kCheckpointMagic, "magic");
  CheckpointData data;
  data.version = r.le<std::uint32_t>("version");
  if (data.version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(data.version) + " (this build reads " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto cfg_len = r.le<std::uint32_t>("config length");
  const std::string cfg = r.take(cfg_len, "config");
  try {
    data.config = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  const auto n = r.le<std::uint32_t>("array count");
  for (std::uint32_t k = 0; k < n; ++k) {
    NamedArray a;
    const auto name_len = r.le<std::uint16_t>("array name length");
    a.name = r.take(name_len, "array name");
    const auto rank = r.le<std::uint32_t>("array rank");
    if (rank > 8) throw CheckpointError("array " + a.name + ": implausible rank " + std::to_string(rank));
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      a.shape.push_back(r.le<std::uint32_t>("array dims"));
      count *= a.shape.back();
    }
    if (count > body) throw CheckpointError("array " + a.name + ": size exceeds file");
    a.values.resize(count);
    for (auto& v : a.values) v = std::bit_cast<float>(r.le<std::uint32_t>("array values"));
    data.arrays.push_back(std::move(a));
  }
  if (r.pos() != body) throw CheckpointError("checkpoint has " + std::to_string(body - r.pos()) + " unexpected trailing bytes");
  detail::Reader tail(bytes, bytes.size());
  tail.take(body, "body");
  const auto stored = tail.le<std::uint64_t>("checksum");
  if (stored != fnv1a(bytes, body)) throw CheckpointError("checkpoint checksum mismatch (file corrupt)");
  return data;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Model <-> checkpoint
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(ModelKind kind, const ModelConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.blocks())
    blocks.push_back({{"c_in", b.c_in}, {"c_out", b.c_out}, {"k_h", b.k_h}, {"k_w", b.k_w}, {"tau", b.tau}});
  return {{"model_kind", to_string(kind)},
          {"window", {{"h", c.window.h}, {"w", c.window.w}}},
          {"channels", channel_set_name(c.window.channels)},
          {"n_filters", c.n_filters},
          {"k", c.k},
          {"n_blocks", c.n_blocks},
          {"filter_shape", to_string(c.filter_shape)},
          {"loss_mode", to_string(c.loss_mode)},
          {"blocks", blocks}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.window.h = j.at("window").at("h").get<std::size_t>();
    c.window.w = j.at("window").at("w").get<std::size_t>();
    c.window.channels = parse_channel_set(j.at("channels").get<std::string>());
    c.n_filters = j.at("n_filters").get<std::size_t>();
    c.k = j.at("k").get<std::size_t>();
    c.n_blocks = j.at("n_blocks").get<std::size_t>();
    c.filter_shape = parse_filter_shape(j.at("filter_shape").get<std::string>());
    c.loss_mode = parse_loss_mode(j.at("loss_mode").get<std::string>());
    const auto expect = c.blocks();
    const auto& blocks = j.at("blocks");
    if (blocks.size() != expect.size())
      throw CheckpointError("checkpoint lists " + std::to_string(blocks.size()) + " blocks, config implies " +
                            std::to_string(expect.size()));
    for (std::size_t l = 0; l < expect.size(); ++l) {
      const BlockConfig got{blocks[l].at("c_in").get<std::size_t>(), blocks[l].at("c_out").get<std::size_t>(),
                            blocks[l].at("k_h").get<std::size_t>(), blocks[l].at("k_w").get<std::size_t>(),
                            blocks[l].at("tau").get<std::size_t>()};
      if (!(got == expect[l])) throw CheckpointError("checkpoint block " + std::to_string(l) + " disagrees with config");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint config incomplete: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }
}

inline nlohmann::json metadata_to_json(const TrainingMetadata& m) {
  return {{"seed", m.seed}, {"epochs", m.epochs}, {"initial_loss", m.initial_loss}, {"loss_history", m.loss_history}};
}

inline TrainingMetadata metadata_from_json(const nlohmann::json& j) {
  TrainingMetadata m;
  if (!j.is_object()) return m;
  m.seed = j.value("seed", std::uint64_t{0});
  m.epochs = j.value("epochs", std::size_t{0});
  m.initial_loss = j.value("initial_loss", 0.0);
  m.loss_history = j.value("loss_history", std::vector<double>{});
  return m;
}

template <typename Model>
CheckpointData checkpoint_from_model(const Model& model, const TrainingMetadata& meta) {
  // parameters() hands out mutable pointers; they are only read here
  auto& m = const_cast<Model&>(model);
  CheckpointData data;
  data.config = config_to_json(Model::kind, model.config());
  data.config["metadata"] = metadata_to_json(meta);
  auto add = [&](const std::string& name, const auto& t) {
    NamedArray a{name, t.shape(), {}};
    a.values.reserve(t.size());
    for (auto v : t.values()) a.values.push_back(static_cast<float>(v));
    data.arrays.push_back(std::move(a));
  };
  for (auto& p : m.parameters()) add(p.name, p.param->value);
  for (auto& [name, buf] : m.buffers()) add(name, *buf);
  return data;
}

template <typename Model>
struct LoadedModel {
  Model model;
  TrainingMetadata metadata;
};

inline ModelKind checkpoint_kind(const CheckpointData& data) {
  const std::string k = data.config.value("model_kind", "");
  if (k == "thread") return ModelKind::Thread;
  if (k == "reply") return ModelKind::Reply;
  throw CheckpointError("checkpoint has unknown model_kind '" + k + "'");
}

/// Rebuilds a model; every array must be present once with the shape the
/// config implies.
template <typename Model>
LoadedModel<Model> model_from_checkpoint(const CheckpointData& data) {
  if (checkpoint_kind(data) != Model::kind)
    throw CheckpointError("checkpoint holds a " + to_string(checkpoint_kind(data)) + " model, expected " +
                          to_string(Model::kind));
  LoadedModel<Model> out{Model(config_from_json(data.config)), metadata_from_json(data.config.value("metadata", nlohmann::json{}))};
  using T = std::remove_reference_t<decltype(out.model.parameters().front().param->value[0])>;
  std::vector<std::pair<std::string, Tensor<T>*>> slots;
  for (auto& p : out.model.parameters()) slots.emplace_back(p.name, &p.param->value);
  for (auto& b : out.model.buffers()) slots.push_back(b);
  if (data.arrays.size() != slots.size())
    throw CheckpointError("checkpoint has " + std::to_string(data.arrays.size()) + " arrays, model expects " +
                          std::to_string(slots.size()));
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const NamedArray& a = data.arrays[k];
    if (a.name != slots[k].first)
      throw CheckpointError("checkpoint array " + std::to_string(k) + " is '" + a.name + "', expected '" +
                            slots[k].first + "'");
    if (a.shape != slots[k].second->shape())
      throw CheckpointError("shape mismatch for parameter " + a.name + ": file has " + shape_string(a.shape) +
                            ", config implies " + shape_string(slots[k].second->shape()));
    for (std::size_t i = 0; i < a.values.size(); ++i) (*slots[k].second)[i] = static_cast<T>(a.values[i]);
  }
  return out;
}

template <typename Model>
void save_checkpoint(const Model& model, const std::string& path, const TrainingMetadata& meta = {}) {
  write_file_bytes(path, encode_checkpoint(checkpoint_from_model(model, meta)));
}

template <typename Model>
LoadedModel<Model> load_checkpoint(const std::string& path) {
  return model_from_checkpoint<Model>(decode_checkpoint(read_file_bytes(path)));
}

}  // namespace socialgrid
