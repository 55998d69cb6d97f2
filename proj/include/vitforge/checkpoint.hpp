#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitforge/errors.hpp"
#include "vitforge/train.hpp"
#include "vitforge/vit.hpp"

namespace vitforge {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

inline void to_json(nlohmann::json& j, const ViTConfig& c) {
  j = {{"image_size", c.image_size},   {"patch_size", c.patch_size},
       {"in_channels", c.in_channels}, {"embed_dim", c.embed_dim},
       {"depth", c.depth},             {"num_heads", c.num_heads},
       {"mlp_ratio", c.mlp_ratio},     {"num_classes", c.num_classes},
       {"layer_norm_eps", c.layer_norm_eps}, {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, ViTConfig& c) {
  j.at("image_size").get_to(c.image_size);
  j.at("patch_size").get_to(c.patch_size);
  j.at("in_channels").get_to(c.in_channels);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("depth").get_to(c.depth);
  j.at("num_heads").get_to(c.num_heads);
  j.at("mlp_ratio").get_to(c.mlp_ratio);
  j.at("num_classes").get_to(c.num_classes);
  j.at("layer_norm_eps").get_to(c.layer_norm_eps);
  c.dropout = j.value("dropout", 0.0f);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},
       {"weight_decay", c.weight_decay},
       {"seed", c.seed},
       {"checkpoint_path", c.checkpoint_path}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("batch_size").get_to(c.batch_size);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("epochs").get_to(c.epochs);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("seed").get_to(c.seed);
  c.checkpoint_path = j.value("checkpoint_path", std::string{});
}

// Self-contained model container. On disk:
//   "VITF" | u32 LE version (1) | u64 LE manifest length | JSON manifest |
//   payload of raw little-endian IEEE-754 f32 tensors, each starting at a
//   64-byte-aligned offset relative to the payload start, gaps zero-filled.
// The manifest lists every tensor as {name, shape, dtype, byte_offset,
// byte_len}. Save followed by load is bit-exact for every tensor.
struct Checkpoint {
  std::uint32_t version = 1;
  ViTConfig config;
  TrainConfig train_config;
  int epoch = 0;
  std::uint64_t rng_state = 0;
  std::vector<std::string> class_names;
  ViTParams params;
  std::optional<AdamState> adam;
};

namespace detail {

constexpr char kCheckpointMagic[4] = {'V', 'I', 'T', 'F'};
constexpr std::size_t kTensorAlignment = 64;

struct TensorRecord {
  std::string name;
  const Tensor* tensor;
};

inline std::vector<TensorRecord> checkpoint_tensors(const Checkpoint& ckpt) {
  std::vector<TensorRecord> records;
  auto& params = const_cast<ViTParams&>(ckpt.params);
  for_each_param(params, [&](const std::string& name, Tensor& t) {
    records.push_back({name, &t});
  });
  if (ckpt.adam) {
    auto& m = const_cast<ViTParams&>(ckpt.adam->m);
    auto& v = const_cast<ViTParams&>(ckpt.adam->v);
    for_each_param(m, [&](const std::string& name, Tensor& t) {
      records.push_back({"adam.m." + name, &t});
    });
    for_each_param(v, [&](const std::string& name, Tensor& t) {
      records.push_back({"adam.v." + name, &t});
    });
  }
  return records;
}

inline void append_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void append_le64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt,
                            const std::filesystem::path& path) {
  const auto records = detail::checkpoint_tensors(ckpt);

  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  offsets.reserve(records.size());
  for (const auto& rec : records) {
    offset = (offset + detail::kTensorAlignment - 1) / detail::kTensorAlignment *
             detail::kTensorAlignment;
    const std::size_t bytes = rec.tensor->size() * sizeof(float);
    tensors.push_back({{"name", rec.name},
                       {"shape", rec.tensor->shape()},
                       {"dtype", "f32"},
                       {"byte_offset", offset},
                       {"byte_len", bytes}});
    offsets.push_back(offset);
    offset += bytes;
  }
  const std::size_t payload_size = offset;

  nlohmann::json manifest = {{"config", ckpt.config},
                             {"train_config", ckpt.train_config},
                             {"epoch", ckpt.epoch},
                             {"rng_state", ckpt.rng_state},
                             {"class_names", ckpt.class_names},
                             {"has_adam", ckpt.adam.has_value()},
                             {"adam_t", ckpt.adam ? ckpt.adam->t : 0},
                             {"tensors", tensors}};
  const std::string manifest_bytes = manifest.dump();

  std::vector<std::uint8_t> blob;
  blob.reserve(16 + manifest_bytes.size() + payload_size);
  blob.insert(blob.end(), detail::kCheckpointMagic, detail::kCheckpointMagic + 4);
  detail::append_le32(blob, ckpt.version);
  detail::append_le64(blob, manifest_bytes.size());
  blob.insert(blob.end(), manifest_bytes.begin(), manifest_bytes.end());
  const std::size_t payload_start = blob.size();
  blob.resize(payload_start + payload_size, 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::memcpy(blob.data() + payload_start + offsets[i], records[i].tensor->data(),
                records[i].tensor->size() * sizeof(float));
  }

  // write-to-temp + atomic rename: an interrupted save never leaves a
  // truncated checkpoint at the target path
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + tmp.string());
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());

  if (blob.size() < 16 || std::memcmp(blob.data(), detail::kCheckpointMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic, not a VITF checkpoint");
  }
  std::uint32_t version = 0;
  std::memcpy(&version, blob.data() + 4, 4);
  if (version != 1) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  std::uint64_t manifest_len = 0;
  std::memcpy(&manifest_len, blob.data() + 8, 8);
  if (16 + manifest_len > blob.size()) {
    throw FormatError(path.string() + ": manifest length exceeds file size");
  }

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.begin() + 16,
                                     blob.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": manifest is not valid JSON: " + e.what());
  }

  Checkpoint ckpt;
  ckpt.version = version;
  try {
    ckpt.config = manifest.at("config").get<ViTConfig>();
    ckpt.train_config = manifest.at("train_config").get<TrainConfig>();
    ckpt.epoch = manifest.at("epoch").get<int>();
    ckpt.rng_state = manifest.at("rng_state").get<std::uint64_t>();
    ckpt.class_names = manifest.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": manifest field error: " + e.what());
  }
  ckpt.config.validate();

  struct Entry {
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t len = 0;
  };
  std::map<std::string, Entry> index;
  try {
    for (const auto& t : manifest.at("tensors")) {
      Entry e;
      e.shape = t.at("shape").get<std::vector<int>>();
      e.offset = t.at("byte_offset").get<std::size_t>();
      e.len = t.at("byte_len").get<std::size_t>();
      if (t.at("dtype").get<std::string>() != "f32") {
        throw FormatError(path.string() + ": tensor " +
                          t.at("name").get<std::string>() + " has unsupported dtype");
      }
      index[t.at("name").get<std::string>()] = std::move(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": tensor table error: " + e.what());
  }

  const std::size_t payload_start = 16 + static_cast<std::size_t>(manifest_len);
  const std::size_t payload_size = blob.size() - payload_start;
  const auto read_into = [&](const std::string& name, Tensor& dst) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw FormatError(path.string() + ": missing tensor " + name);
    }
    const Entry& e = it->second;
    if (e.shape != dst.shape()) {
      throw FormatError(path.string() + ": tensor " + name + " has shape " +
                        shape_to_string(e.shape) + ", expected " + dst.shape_str());
    }
    if (e.len != dst.size() * sizeof(float)) {
      throw FormatError(path.string() + ": tensor " + name +
                        " byte_len does not match its declared shape");
    }
    if (e.offset + e.len > payload_size) {
      throw FormatError(path.string() + ": tensor " + name +
                        " extends past end of file (truncated?)");
    }
    std::memcpy(dst.data(), blob.data() + payload_start + e.offset, e.len);
  };

  ckpt.params = make_params<float>(ckpt.config);
  for (auto& [name, tensor] : param_refs(ckpt.params)) read_into(name, *tensor);

  if (manifest.value("has_adam", false)) {
    AdamState adam = make_adam_state(ckpt.config);
    adam.t = manifest.value("adam_t", 0LL);
    for (auto& [name, tensor] : param_refs(adam.m)) read_into("adam.m." + name, *tensor);
    for (auto& [name, tensor] : param_refs(adam.v)) read_into("adam.v." + name, *tensor);
    ckpt.adam = std::move(adam);
  }
  return ckpt;
}

}  // namespace vitforge
