#include "dfi/backbone.hpp"

#include "dfi/error.hpp"

namespace dfi {

void BackboneConfig::validate() const {
  if (num_stages != kNumStages) throw ConfigError("backbone.num_stages must be 6, got " + std::to_string(num_stages));
  if (input_channels < 1) throw ConfigError("backbone.input_channels must be >= 1");
  if (static_cast<int>(stage_channels.size()) != num_stages - 1) {
    throw ConfigError("backbone.stage_channels must list " + std::to_string(num_stages - 1) + " counts, got " +
                      std::to_string(stage_channels.size()));
  }
  for (int c : stage_channels)
    if (c < 1) throw ConfigError("backbone.stage_channels entries must be >= 1");
  if (ppm_channels < 1) throw ConfigError("backbone.ppm_channels must be >= 1");
  if (ppm_bin_sizes.empty()) throw ConfigError("backbone.ppm_bin_sizes must not be empty");
  for (int b : ppm_bin_sizes)
    if (b < 1) throw ConfigError("backbone.ppm_bin_sizes entries must be >= 1");
  if (norm_groups < 1) throw ConfigError("backbone.norm_groups must be >= 1");
}

Backbone::Backbone(const BackboneConfig& config, ParameterSet& params, Rng& rng) : config_(config) {
  config_.validate();
  int64_t in = config_.input_channels;
  for (int s = 0; s < kNumStages - 1; ++s) {
    const int64_t out = config_.stage_channels[static_cast<std::size_t>(s)];
    // Stages 1-4 halve the resolution at entry; stage 5 keeps stride 16 and
    // dilates instead.
    const bool dilated = s == kNumStages - 2;
    const int stride = dilated ? 1 : 2;
    const int dilation = dilated ? 2 : 1;
    std::vector<Block> blocks;
    for (int b = 0; b < 2; ++b) {
      const std::string name = "backbone.stage" + std::to_string(s + 1) + ".conv" + std::to_string(b);
      Block block{Conv2d::create(params, name, b == 0 ? in : out, out, 3, ParamGroup::Backbone, std::nullopt, rng,
                                 false, b == 0 ? stride : 1, dilation),
                  Norm::create(params, name + ".norm", out, config_.norm, config_.norm_groups, ParamGroup::Backbone,
                               std::nullopt)};
      blocks.push_back(block);
    }
    stages_.push_back(std::move(blocks));
    in = out;
  }

  const int64_t top = config_.stage_channels.back();
  const int64_t branch_channels =
      std::max<int64_t>(1, config_.ppm_channels / static_cast<int64_t>(config_.ppm_bin_sizes.size()));
  for (std::size_t i = 0; i < config_.ppm_bin_sizes.size(); ++i) {
    const std::string name = "ppm.branch" + std::to_string(i);
    ppm_branches_.push_back(
        {config_.ppm_bin_sizes[i],
         Conv2d::create(params, name + ".conv", top, branch_channels, 1, ParamGroup::Ppm, std::nullopt, rng, false),
         Norm::create(params, name + ".norm", branch_channels, NormKind::Group, config_.norm_groups, ParamGroup::Ppm,
                      std::nullopt)});
  }
  const int64_t fused_in = top + branch_channels * static_cast<int64_t>(ppm_branches_.size());
  ppm_fuse_ =
      Conv2d::create(params, "ppm.fuse", fused_in, config_.ppm_channels, 1, ParamGroup::Ppm, std::nullopt, rng, false);
  ppm_fuse_norm_ = Norm::create(params, "ppm.fuse.norm", config_.ppm_channels, NormKind::Group, config_.norm_groups,
                                ParamGroup::Ppm, std::nullopt);
}

std::vector<int64_t> Backbone::stage_channel_counts() const {
  std::vector<int64_t> out(config_.stage_channels.begin(), config_.stage_channels.end());
  out.push_back(config_.ppm_channels);
  return out;
}

FeatureBank Backbone::forward(const Var& x) const {
  if (x.value().rank() != 4 || x.dim(1) != config_.input_channels) {
    throw UsageError("backbone input must be (batch, " + std::to_string(config_.input_channels) + ", H, W), got " +
                     shape_to_string(x.shape()));
  }
  if (x.dim(2) % kInputMultiple != 0 || x.dim(3) % kInputMultiple != 0) {
    throw UsageError("backbone input spatial size must be a multiple of 16, got " + shape_to_string(x.shape()));
  }
  ++forward_calls_;
  FeatureBank bank;
  Var h = x;
  for (const auto& blocks : stages_) {
    for (const Block& b : blocks) h = ops::relu(b.norm(b.conv(h)));
    bank.stages.push_back(h);
  }
  bank.stages.push_back(ppm_forward(h));
  return bank;
}

Var Backbone::ppm_forward(const Var& top_stage) const {
  const int64_t h = top_stage.dim(2), w = top_stage.dim(3);
  std::vector<Var> parts{top_stage};
  for (const PpmBranch& br : ppm_branches_) {
    Var pooled = ops::adaptive_avg_pool(top_stage, br.bins);
    Var projected = ops::relu(br.norm(br.conv(pooled)));
    parts.push_back(ops::resize_bilinear(projected, h, w));
  }
  return ops::relu(ppm_fuse_norm_(ppm_fuse_(ops::concat_channels(parts))));
}

}  // namespace dfi
