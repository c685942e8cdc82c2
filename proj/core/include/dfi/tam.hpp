#pragma once

#include <map>
#include <string_view>

#include "dfi/nn.hpp"

namespace dfi {

enum class TamMode { Shared, Unshared, Off };

std::string_view tam_mode_name(TamMode mode);
TamMode parse_tam_mode(std::string_view name);

struct TamConfig {
  int channels = 16;
  TamMode mode = TamMode::Shared;
  int hidden_channels = 0;  // 0 selects max(4, channels / 2)

  int resolved_hidden() const;
};

// Spatial attention gate A = sigmoid(g(D)) broadcast over channels. One gate
// network per DFIM rate, either shared by every task or one per task.
class Tam {
 public:
  Tam(int rate, const TamConfig& config, const std::vector<Task>& tasks, int norm_groups, ParameterSet& params,
      Rng& rng);

  Var forward(const Var& feature, Task task, Var* attention = nullptr) const;
  // (batch, 1, h, w) in (0, 1). Throws UsageError in off mode.
  Var attention_map(const Var& feature, Task task) const;

  TamMode mode() const { return config_.mode; }

  // Zeroes the output layer so A = 0.5 everywhere.
  void zero_output_layer();

 private:
  struct Gate {
    Conv2d conv1;
    Norm norm;
    Conv2d conv2;
  };
  const Gate& gate_for(Task task) const;

  int rate_;
  TamConfig config_;
  std::map<Task, Gate> gates_;  // single entry keyed by Saliency in shared mode
};

}  // namespace dfi
