#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dfi/model.hpp"

namespace dfi {

struct CheckpointMeta {
  ModelConfig model;
  std::string run_config_json;  // effective run configuration, may be empty
  int64_t step = 0;
  int epoch = 0;  // completed epochs
  uint64_t seed = 0;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<NamedTensor> entries;
};

// Layout: "DFICKPT1", uint64 header length, JSON header, uint32 entry count,
// then per entry: uint32 name length, name, uint32 rank, int64 dims, float32
// data (little endian, row-major).
void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies entries into the model's parameters; names and shapes must match
// exactly (IoError otherwise).
void load_parameters(Model& model, const Checkpoint& checkpoint);
std::unique_ptr<Model> load_model(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace dfi
