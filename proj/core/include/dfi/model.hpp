#pragma once

#include <map>
#include <memory>
#include <vector>

#include "dfi/backbone.hpp"
#include "dfi/dfim.hpp"
#include "dfi/tam.hpp"

namespace dfi {

struct PreprocessConfig {
  std::vector<double> mean{0.485, 0.456, 0.406};
  std::vector<double> stddev{0.229, 0.224, 0.225};
};

struct ModelConfig {
  BackboneConfig backbone;
  DfimConfig dfim;
  TamConfig tam;
  std::vector<int> rates{2, 4, 8, 16};
  std::vector<Task> tasks{Task::Saliency, Task::Edge, Task::Skeleton};
  PreprocessConfig preprocess;
  uint64_t init_seed = 0;

  void validate() const;
};

struct ParameterBreakdown {
  int64_t backbone = 0;
  int64_t ppm = 0;
  int64_t dfims_shared = 0;
  int64_t tams = 0;
  std::map<Task, int64_t> per_task;
  int64_t total = 0;

  int64_t shared() const { return backbone + ppm + dfims_shared + tams; }
  double shared_fraction() const { return total > 0 ? static_cast<double>(shared()) / static_cast<double>(total) : 0.0; }
};

// Intermediate results of one task path, one entry per DFIM rate.
struct TaskTrace {
  std::vector<SelectionProfile> profiles;
  std::vector<Var> integrated;  // DFIM output, before TAM
  std::vector<Var> attention;   // TAM gate; undefined when TAM is off
};

class Model {
 public:
  explicit Model(ModelConfig config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // images: (batch, channels, H, W) in [0, 1]. Returns logits (batch, 1, H, W).
  Var forward(const Tensor& images, Task task, TaskTrace* trace = nullptr);
  // Shared backbone evaluated once; one logit map per enabled task.
  std::map<Task, Var> forward_all(const Tensor& images, std::map<Task, TaskTrace>* traces = nullptr);
  // Probability maps without recording a tape.
  Tensor predict(const Tensor& images, Task task);

  ParameterBreakdown parameter_breakdown() const;

  bool has_task(Task task) const;
  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return *params_; }
  const ParameterSet& parameters() const { return *params_; }
  const Backbone& backbone() const { return *backbone_; }
  const std::vector<Dfim>& dfims() const { return dfims_; }
  std::vector<Tam>& tams() { return tams_; }
  const std::vector<Tam>& tams() const { return tams_; }

 private:
  struct Prepared {
    Var input;
    int64_t height, width, padded_height, padded_width;
  };
  Prepared prepare(const Tensor& images) const;
  std::vector<std::vector<Var>> align_all(const FeatureBank& bank, const Prepared& p) const;
  Var task_path(const std::vector<std::vector<Var>>& aligned, const Prepared& p, Task task, TaskTrace* trace) const;
  void require_task(Task task) const;

  ModelConfig config_;
  std::unique_ptr<ParameterSet> params_;
  std::unique_ptr<Backbone> backbone_;
  std::vector<Dfim> dfims_;
  std::vector<Tam> tams_;
  std::map<Task, Conv2d> heads_;
};

}  // namespace dfi
