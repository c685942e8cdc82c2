#include "dfi/tam.hpp"

#include <algorithm>

#include "dfi/error.hpp"

namespace dfi {

std::string_view tam_mode_name(TamMode mode) {
  switch (mode) {
    case TamMode::Shared: return "shared";
    case TamMode::Unshared: return "unshared";
    case TamMode::Off: return "off";
  }
  return "unknown";
}

TamMode parse_tam_mode(std::string_view name) {
  for (TamMode m : {TamMode::Shared, TamMode::Unshared, TamMode::Off})
    if (tam_mode_name(m) == name) return m;
  throw ConfigError("tam.mode must be shared, unshared or off, got '" + std::string(name) + "'");
}

int TamConfig::resolved_hidden() const { return hidden_channels > 0 ? hidden_channels : std::max(4, channels / 2); }

Tam::Tam(int rate, const TamConfig& config, const std::vector<Task>& tasks, int norm_groups, ParameterSet& params,
         Rng& rng)
    : rate_(rate), config_(config) {
  if (config_.mode == TamMode::Off) return;
  const int64_t hidden = config_.resolved_hidden();
  auto build = [&](const std::string& prefix, ParamGroup group, std::optional<Task> owner) {
    return Gate{Conv2d::create(params, prefix + ".conv1", config_.channels, hidden, 3, group, owner, rng, false, 1, 1,
                               PadMode::Replicate),
                Norm::create(params, prefix + ".norm", hidden, NormKind::Group, norm_groups, group, owner),
                Conv2d::create(params, prefix + ".conv2", hidden, 1, 3, group, owner, rng, true, 1, 1,
                               PadMode::Replicate)};
  };
  const std::string prefix = "tam.r" + std::to_string(rate);
  if (config_.mode == TamMode::Shared) {
    gates_.emplace(Task::Saliency, build(prefix + ".shared", ParamGroup::Tam, std::nullopt));
  } else {
    for (Task t : tasks) gates_.emplace(t, build(prefix + "." + std::string(task_name(t)), ParamGroup::TaskSpecific, t));
  }
}

const Tam::Gate& Tam::gate_for(Task task) const {
  auto it = gates_.find(config_.mode == TamMode::Shared ? Task::Saliency : task);
  if (it == gates_.end()) {
    throw UsageError("tam r" + std::to_string(rate_) + " has no gate for task " + std::string(task_name(task)));
  }
  return it->second;
}

Var Tam::attention_map(const Var& feature, Task task) const {
  if (config_.mode == TamMode::Off) throw UsageError("attention_map requested with tam.mode = off");
  const Gate& g = gate_for(task);
  return ops::sigmoid(g.conv2(ops::relu(g.norm(g.conv1(feature)))));
}

Var Tam::forward(const Var& feature, Task task, Var* attention) const {
  if (config_.mode == TamMode::Off) return feature;
  Var a = attention_map(feature, task);
  if (attention) *attention = a;
  return ops::mul_spatial_gate(feature, a);
}

void Tam::zero_output_layer() {
  for (auto& [task, g] : gates_) {
    init_constant(*g.conv2.weight, 0.0);
    init_constant(*g.conv2.bias, 0.0);
  }
}

}  // namespace dfi
