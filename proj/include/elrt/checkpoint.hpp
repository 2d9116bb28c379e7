#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "elrt/model.hpp"
#include "elrt/tensor.hpp"
#include "elrt/trainer.hpp"

namespace elrt {

/// On-disk layout, all integers little-endian:
///   "ELRT"  u32 version  u64 array_count
///   per array: u32 name_len, name bytes, u32 ndim, u64 dims[ndim], f32 payload
///   u64 meta_len, UTF-8 JSON metadata
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Array {
    std::string name;
    Tensor value;
    bool operator==(const Array&) const = default;
  };

  std::vector<Array> arrays;
  std::string metadata = "{}";

  const Array* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError-like std::runtime_error on bad magic, version, or truncation.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Everything needed to rebuild a model's structure: the weights themselves come from arrays.
struct CheckpointMeta {
  ModelSpec spec;
  std::string ranks;  // rank-config text applied after building
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // completed epochs
  std::string config_digest;
  std::string train_config;  // TrainConfig::describe()

  bool operator==(const CheckpointMeta&) const = default;
};

std::string encode_meta(const CheckpointMeta& meta);
CheckpointMeta decode_meta(const std::string& json);

/// Arrays: every state tensor under its model name, then "momentum/<name>" per buffer.
Checkpoint make_checkpoint(Model<float>& model, const OptimizerState<float>& opt, const CheckpointMeta& meta);

struct Restored {
  Model<float> model;
  OptimizerState<float> optimizer;
  CheckpointMeta meta;
};

/// Rebuilds the model from meta, then overwrites every state tensor. Missing, surplus or
/// misshapen arrays are errors; nothing is returned unless all of them match.
Restored restore_checkpoint(const Checkpoint& ckpt);

}  // namespace elrt
