#pragma once

#include <array>
#include <vector>

#include "dfi/nn.hpp"

namespace dfi {

inline constexpr int kNumStages = 6;
inline constexpr std::array<int, kNumStages> kStageStrides{2, 4, 8, 16, 16, 16};
// Inputs are padded to a multiple of the coarsest stride.
inline constexpr int kInputMultiple = 16;

struct BackboneConfig {
  int input_channels = 3;
  std::vector<int> stage_channels{8, 16, 32, 64, 64};
  int ppm_channels = 64;
  std::vector<int> ppm_bin_sizes{1, 2, 3, 6};
  int num_stages = kNumStages;
  NormKind norm = NormKind::Group;
  int norm_groups = 4;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Stage taps S_1..S_6 and their strides relative to the (padded) input.
struct FeatureBank {
  std::vector<Var> stages;
  std::array<int, kNumStages> strides = kStageStrides;

  int64_t channels(std::size_t i) const { return stages.at(i).dim(1); }
};

class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParameterSet& params, Rng& rng);

  // x: (batch, input_channels, H, W) with H, W multiples of 16.
  FeatureBank forward(const Var& x) const;
  // Pyramid pooling over the stage-5 map; output has ppm_channels channels at
  // the same resolution.
  Var ppm_forward(const Var& top_stage) const;

  const BackboneConfig& config() const { return config_; }
  // Channel count of every stage tap, S_6 included.
  std::vector<int64_t> stage_channel_counts() const;
  int forward_calls() const { return forward_calls_; }

 private:
  struct Block {
    Conv2d conv;
    Norm norm;
  };
  struct PpmBranch {
    int bins;
    Conv2d conv;
    Norm norm;
  };

  BackboneConfig config_;
  std::vector<std::vector<Block>> stages_;
  std::vector<PpmBranch> ppm_branches_;
  Conv2d ppm_fuse_;
  Norm ppm_fuse_norm_;
  mutable int forward_calls_ = 0;
};

}  // namespace dfi
