#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "dfi/backbone.hpp"

namespace dfi {

enum class DfimVariant { Sparse, Dense, Identity };

std::string_view variant_name(DfimVariant v);
DfimVariant parse_variant(std::string_view name);

inline constexpr std::array<int, 4> kSupportedRates{2, 4, 8, 16};
bool is_supported_rate(int rate);

struct DfimConfig {
  int common_channels = 16;
  DfimVariant variant = DfimVariant::Sparse;
};

// Per-(DFIM, task) stage probabilities and the retained-stage mask, one row
// per batch element.
struct SelectionProfile {
  int rate = 0;
  Task task = Task::Saliency;
  bool computed = false;  // false for the identity variant
  int64_t batch = 0;
  Tensor probabilities;        // (batch, 6)
  std::vector<uint8_t> kept;   // batch * 6, row-major

  bool is_kept(int64_t n, int stage) const { return kept.at(static_cast<std::size_t>(n * kNumStages + stage)) != 0; }
  double probability(int64_t n, int stage) const { return probabilities[n * kNumStages + stage]; }
};

// Keeps exactly half of the entries: those ranked in the top M/2 by value,
// ties resolved toward lower stage indices.
std::vector<uint8_t> select_sparse(std::span<const double> probabilities);

// sparse: sum over kept of p_i * S_i; dense: sum of p_i * S_i; identity: sum of S_i.
// `probabilities` is (batch, M) and ignored for identity; `mask` is batch*M.
Var integrate(const std::vector<Var>& aligned, const Var& probabilities, std::span<const uint8_t> mask,
              DfimVariant variant);

class Dfim {
 public:
  Dfim(int rate, const DfimConfig& config, const std::vector<int64_t>& stage_channels, const std::vector<Task>& tasks,
       ParameterSet& params, Rng& rng);

  // Per-stage 1x1 projection to C channels and bilinear resize to stride r.
  // (padded_height, padded_width) is the backbone input size.
  std::vector<Var> align_stages(const FeatureBank& bank, int64_t padded_height, int64_t padded_width) const;
  // Raw (batch, M) logits from GAP of the summed aligned stages.
  Var selection_logits(const std::vector<Var>& aligned, Task task) const;

  struct Output {
    Var feature;  // (batch, C, H/r, W/r)
    SelectionProfile profile;
  };
  Output forward_aligned(const std::vector<Var>& aligned, Task task) const;
  Output forward(const FeatureBank& bank, int64_t padded_height, int64_t padded_width, Task task) const;

  int rate() const { return rate_; }
  const DfimConfig& config() const { return config_; }

 private:
  int rate_;
  DfimConfig config_;
  std::vector<Conv2d> projections_;
  std::map<Task, Linear> selectors_;
};

}  // namespace dfi
