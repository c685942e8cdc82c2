#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dfi/config.hpp"
#include "dfi/data.hpp"
#include "dfi/losses.hpp"
#include "dfi/model.hpp"
#include "dfi/optimizer.hpp"

namespace dfi {

struct TaskBatch {
  Tensor images;  // (B, 3, H, W)
  Tensor gts;     // (B, 1, H, W)
};
using Batch = std::map<Task, TaskBatch>;

TaskBatch make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices);

// Sequential: forward and backward one task at a time in canonical order.
// Summed: forward every task, add the losses, backward once.
enum class GradPolicy { Sequential, Summed };

// Clears parameter gradients, then leaves d(sum of task losses)/d(theta) in
// them. Returns the per-task losses.
std::map<Task, double> accumulate_gradients(Model& model, const Batch& batch, const LossConfig& loss,
                                            GradPolicy policy = GradPolicy::Sequential);

struct LogRow {
  int64_t step = 0;
  int epoch = 0;
  std::map<Task, double> losses;
  double lr = 0.0;
};

struct TrainState {
  int64_t step = 0;
  int epoch = 0;  // completed epochs
  Rng rng;
  std::map<Task, double> running_loss;  // mean over the last epoch
  std::filesystem::path checkpoint_path;
  std::vector<LogRow> log;
};

struct RunOptions {
  std::filesystem::path output_dir;
  std::filesystem::path resume_from;  // checkpoint to continue from, optional
  int max_epochs = -1;                // stop early after this many epochs in total
  std::string config_json;            // echoed into checkpoint headers
  bool write_files = true;
};

// Steps per epoch: the largest dataset seen once, in batches.
int64_t steps_per_epoch(const std::map<Task, const Dataset*>& datasets, int batch_size);

class Trainer {
 public:
  Trainer(Model& model, TrainConfig train, LossConfig loss);

  // One joint iteration: accumulate all task gradients, then one optimizer
  // step. NumericError on a non-finite loss.
  std::map<Task, double> train_step(const Batch& batch);

  TrainState run(const std::map<Task, const Dataset*>& datasets, const RunOptions& options);

  Adam& optimizer() { return adam_; }
  int64_t steps() const { return step_; }

 private:
  Model* model_;
  TrainConfig train_;
  LossConfig loss_;
  Adam adam_;
  int64_t step_ = 0;
};

// Sidecar holding optimizer moments and the sampling RNG for exact resume.
std::filesystem::path state_path_for(const std::filesystem::path& checkpoint);

void write_train_log(const std::filesystem::path& path, const std::vector<LogRow>& rows,
                     const std::vector<Task>& tasks);

// Per-pixel mean loss of each task over its whole dataset, no tape.
std::map<Task, double> mean_pixel_losses(Model& model, const std::map<Task, const Dataset*>& datasets,
                                         const LossConfig& loss);

struct SmokeResult {
  std::map<Task, double> initial;
  std::map<Task, double> final;
};

// Trains for `steps` joint iterations cycling through the samples in order.
SmokeResult overfit_smoke(Model& model, const std::map<Task, const Dataset*>& datasets, int steps,
                          const TrainConfig& train, const LossConfig& loss = {});

}  // namespace dfi
