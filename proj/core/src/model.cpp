#include "dfi/model.hpp"

#include <algorithm>

#include "dfi/error.hpp"

namespace dfi {

void ModelConfig::validate() const {
  backbone.validate();
  if (rates.empty()) throw ConfigError("model.rates must not be empty");
  for (int r : rates)
    if (!is_supported_rate(r)) throw ConfigError("model.rates entries must be in {2,4,8,16}, got " + std::to_string(r));
  std::vector<int> sorted = rates;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("model.rates has duplicates");
  if (tasks.empty()) throw ConfigError("model.tasks must not be empty");
  if (canonical_task_order(tasks).size() != tasks.size()) throw ConfigError("model.tasks has duplicates");
  if (dfim.common_channels < 1) throw ConfigError("dfim.common_channels must be >= 1");
  if (tam.channels != dfim.common_channels) {
    throw ConfigError("tam.channels (" + std::to_string(tam.channels) + ") must equal dfim.common_channels (" +
                      std::to_string(dfim.common_channels) + ")");
  }
  const auto c = static_cast<std::size_t>(backbone.input_channels);
  if (preprocess.mean.size() != c || preprocess.stddev.size() != c) {
    throw ConfigError("preprocess.mean/stddev must have one entry per input channel");
  }
  for (double s : preprocess.stddev)
    if (!(s > 0.0)) throw ConfigError("preprocess.stddev entries must be > 0");
}

Model::Model(ModelConfig config) : config_(std::move(config)), params_(std::make_unique<ParameterSet>()) {
  config_.tasks = canonical_task_order(config_.tasks);
  config_.validate();
  Rng rng(config_.init_seed);
  backbone_ = std::make_unique<Backbone>(config_.backbone, *params_, rng);
  const std::vector<int64_t> stage_channels = backbone_->stage_channel_counts();
  for (int r : config_.rates) {
    dfims_.emplace_back(r, config_.dfim, stage_channels, config_.tasks, *params_, rng);
    tams_.emplace_back(r, config_.tam, config_.tasks, config_.backbone.norm_groups, *params_, rng);
  }
  for (Task t : config_.tasks) {
    heads_.emplace(t, Conv2d::create(*params_, "head." + std::string(task_name(t)), config_.dfim.common_channels, 1, 1,
                                     ParamGroup::TaskSpecific, t, rng, true));
  }
  params_->round_to_storage_precision();
}

bool Model::has_task(Task task) const {
  return std::find(config_.tasks.begin(), config_.tasks.end(), task) != config_.tasks.end();
}

void Model::require_task(Task task) const {
  if (!has_task(task)) throw UsageError("task '" + std::string(task_name(task)) + "' is not enabled in this model");
}

Model::Prepared Model::prepare(const Tensor& images) const {
  const int64_t c = config_.backbone.input_channels;
  if (images.rank() != 4 || images.dim(1) != c) {
    throw UsageError("model input must be (batch, " + std::to_string(c) + ", H, W), got " +
                     shape_to_string(images.shape()));
  }
  Prepared p;
  p.height = images.dim(2);
  p.width = images.dim(3);
  p.padded_height = (p.height + kInputMultiple - 1) / kInputMultiple * kInputMultiple;
  p.padded_width = (p.width + kInputMultiple - 1) / kInputMultiple * kInputMultiple;
  Tensor normalized = images;
  const int64_t hw = p.height * p.width;
  for (int64_t n = 0; n < images.dim(0); ++n)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double mean = config_.preprocess.mean[static_cast<std::size_t>(ch)];
      const double inv = 1.0 / config_.preprocess.stddev[static_cast<std::size_t>(ch)];
      double* v = normalized.data() + (n * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) v[i] = (v[i] - mean) * inv;
    }
  if (p.padded_height != p.height || p.padded_width != p.width) {
    normalized = ops::pad_replicate(normalized, 0, static_cast<int>(p.padded_height - p.height), 0,
                                    static_cast<int>(p.padded_width - p.width));
  }
  p.input = Var::constant(std::move(normalized));
  return p;
}

std::vector<std::vector<Var>> Model::align_all(const FeatureBank& bank, const Prepared& p) const {
  std::vector<std::vector<Var>> aligned;
  for (const Dfim& d : dfims_) aligned.push_back(d.align_stages(bank, p.padded_height, p.padded_width));
  return aligned;
}

Var Model::task_path(const std::vector<std::vector<Var>>& aligned, const Prepared& p, Task task,
                     TaskTrace* trace) const {
  std::vector<Var> upsampled;
  for (std::size_t i = 0; i < dfims_.size(); ++i) {
    Dfim::Output out = dfims_[i].forward_aligned(aligned[i], task);
    Var attention;
    Var tailored = tams_[i].forward(out.feature, task, &attention);
    if (trace) {
      trace->profiles.push_back(out.profile);
      trace->integrated.push_back(out.feature);
      trace->attention.push_back(attention);
    }
    upsampled.push_back(ops::resize_bilinear(tailored, p.padded_height, p.padded_width));
  }
  Var logits = heads_.at(task)(ops::add_n(upsampled));
  return ops::crop(logits, p.height, p.width);
}

Var Model::forward(const Tensor& images, Task task, TaskTrace* trace) {
  require_task(task);
  const Prepared p = prepare(images);
  const FeatureBank bank = backbone_->forward(p.input);
  return task_path(align_all(bank, p), p, task, trace);
}

std::map<Task, Var> Model::forward_all(const Tensor& images, std::map<Task, TaskTrace>* traces) {
  const Prepared p = prepare(images);
  const FeatureBank bank = backbone_->forward(p.input);
  const auto aligned = align_all(bank, p);
  std::map<Task, Var> out;
  for (Task t : config_.tasks) {
    TaskTrace* trace = traces ? &(*traces)[t] : nullptr;
    out.emplace(t, task_path(aligned, p, t, trace));
  }
  return out;
}

Tensor Model::predict(const Tensor& images, Task task) {
  NoGradGuard guard;
  return ops::sigmoid(forward(images, task)).value();
}

ParameterBreakdown Model::parameter_breakdown() const {
  ParameterBreakdown b;
  for (Task t : config_.tasks) b.per_task[t] = 0;
  for (const Parameter& p : params_->items()) {
    const int64_t n = p.numel();
    b.total += n;
    switch (p.group) {
      case ParamGroup::Backbone: b.backbone += n; break;
      case ParamGroup::Ppm: b.ppm += n; break;
      case ParamGroup::DfimShared: b.dfims_shared += n; break;
      case ParamGroup::Tam: b.tams += n; break;
      case ParamGroup::TaskSpecific: b.per_task[p.owner.value()] += n; break;
    }
  }
  return b;
}

}  // namespace dfi
