#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dfi/data.hpp"
#include "dfi/losses.hpp"
#include "dfi/metrics.hpp"
#include "dfi/model.hpp"

namespace dfi {

struct TrainConfig {
  double learning_rate = 5e-5;
  double weight_decay = 5e-4;
  int epochs = 12;
  int lr_drop_epoch = 9;
  double lr_drop_factor = 10.0;
  uint64_t seed = 0;
  std::string optimizer = "adam";
  std::string grad_accumulation = "sequential";
  int batch_size = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  // Learning rate in effect during the 0-based `epoch`.
  double lr_for_epoch(int epoch) const;
};

// Per task either a directory in the load_directory layout or the literal
// "synthetic". Synthetic sources share one generated image set.
struct DataConfig {
  std::map<Task, std::string> sources;
  SyntheticSpec synthetic;
  int synthetic_count = 8;

  bool is_synthetic(Task task) const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  DataConfig data;
  MetricSettings metrics;
  std::string output_dir = "runs/default";

  void validate() const;
};

// Unknown keys and type mismatches raise ConfigError naming the key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
// Effective configuration with all defaults resolved.
std::string run_config_to_json(const RunConfig& config);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace dfi
