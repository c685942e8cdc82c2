#include "dfi/dfim.hpp"

#include <algorithm>
#include <numeric>

#include "dfi/error.hpp"

namespace dfi {

std::string_view variant_name(DfimVariant v) {
  switch (v) {
    case DfimVariant::Sparse: return "sparse";
    case DfimVariant::Dense: return "dense";
    case DfimVariant::Identity: return "identity";
  }
  return "unknown";
}

DfimVariant parse_variant(std::string_view name) {
  for (DfimVariant v : {DfimVariant::Sparse, DfimVariant::Dense, DfimVariant::Identity})
    if (variant_name(v) == name) return v;
  throw ConfigError("dfim.variant must be sparse, dense or identity, got '" + std::string(name) + "'");
}

bool is_supported_rate(int rate) {
  return std::find(kSupportedRates.begin(), kSupportedRates.end(), rate) != kSupportedRates.end();
}

std::vector<uint8_t> select_sparse(std::span<const double> probabilities) {
  const std::size_t m = probabilities.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  // Descending by value; stable so equal values keep the lower index first.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probabilities[a] > probabilities[b]; });
  std::vector<uint8_t> mask(m, 0);
  for (std::size_t k = 0; k < (m + 1) / 2; ++k) mask[order[k]] = 1;
  return mask;
}

Var integrate(const std::vector<Var>& aligned, const Var& probabilities, std::span<const uint8_t> mask,
              DfimVariant variant) {
  if (aligned.empty()) throw UsageError("integrate: no aligned stages");
  if (variant == DfimVariant::Identity) return ops::add_n(aligned);
  const int64_t batch = aligned.front().dim(0);
  const int64_t m = static_cast<int64_t>(aligned.size());
  if (variant == DfimVariant::Dense) {
    std::vector<uint8_t> all(static_cast<std::size_t>(batch * m), 1);
    return ops::weighted_sum(aligned, probabilities, all);
  }
  return ops::weighted_sum(aligned, probabilities, mask);
}

Dfim::Dfim(int rate, const DfimConfig& config, const std::vector<int64_t>& stage_channels,
           const std::vector<Task>& tasks, ParameterSet& params, Rng& rng)
    : rate_(rate), config_(config) {
  if (!is_supported_rate(rate)) throw ConfigError("dfim rate must be one of 2,4,8,16, got " + std::to_string(rate));
  if (config.common_channels < 1) throw ConfigError("dfim.common_channels must be >= 1");
  if (stage_channels.size() != kNumStages) throw UsageError("dfim expects 6 stage channel counts");
  const std::string prefix = "dfim.r" + std::to_string(rate);
  for (std::size_t i = 0; i < stage_channels.size(); ++i) {
    projections_.push_back(Conv2d::create(params, prefix + ".proj" + std::to_string(i + 1), stage_channels[i],
                                          config.common_channels, 1, ParamGroup::DfimShared, std::nullopt, rng, true));
  }
  if (config.variant != DfimVariant::Identity) {
    for (Task t : tasks) {
      selectors_.emplace(t, Linear::create(params, prefix + ".fc." + std::string(task_name(t)), config.common_channels,
                                           kNumStages, ParamGroup::TaskSpecific, t, rng));
    }
  }
}

std::vector<Var> Dfim::align_stages(const FeatureBank& bank, int64_t padded_height, int64_t padded_width) const {
  if (bank.stages.size() != projections_.size()) {
    throw UsageError("feature bank has " + std::to_string(bank.stages.size()) + " stages, expected 6");
  }
  const int64_t h = padded_height / rate_, w = padded_width / rate_;
  std::vector<Var> aligned;
  aligned.reserve(projections_.size());
  for (std::size_t i = 0; i < projections_.size(); ++i) {
    aligned.push_back(ops::resize_bilinear(projections_[i](bank.stages[i]), h, w));
  }
  return aligned;
}

Var Dfim::selection_logits(const std::vector<Var>& aligned, Task task) const {
  auto it = selectors_.find(task);
  if (it == selectors_.end()) {
    throw UsageError("dfim r" + std::to_string(rate_) + " has no selector for task " + std::string(task_name(task)));
  }
  return it->second(ops::global_avg_pool(ops::add_n(aligned)));
}

Dfim::Output Dfim::forward_aligned(const std::vector<Var>& aligned, Task task) const {
  Output out;
  out.profile.rate = rate_;
  out.profile.task = task;
  out.profile.batch = aligned.front().dim(0);
  if (config_.variant == DfimVariant::Identity) {
    out.feature = integrate(aligned, Var(), {}, DfimVariant::Identity);
    return out;
  }
  Var p = ops::softmax(selection_logits(aligned, task));
  const int64_t batch = p.dim(0);
  std::vector<uint8_t> mask;
  mask.reserve(static_cast<std::size_t>(batch * kNumStages));
  for (int64_t n = 0; n < batch; ++n) {
    std::span<const double> row(p.value().data() + n * kNumStages, kNumStages);
    std::vector<uint8_t> k = config_.variant == DfimVariant::Sparse ? select_sparse(row)
                                                                    : std::vector<uint8_t>(kNumStages, 1);
    mask.insert(mask.end(), k.begin(), k.end());
  }
  out.feature = integrate(aligned, p, mask, config_.variant);
  out.profile.computed = true;
  out.profile.probabilities = p.value();
  out.profile.kept = std::move(mask);
  return out;
}

Dfim::Output Dfim::forward(const FeatureBank& bank, int64_t padded_height, int64_t padded_width, Task task) const {
  return forward_aligned(align_stages(bank, padded_height, padded_width), task);
}

}  // namespace dfi
