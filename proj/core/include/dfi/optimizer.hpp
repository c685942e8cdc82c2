#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dfi/nn.hpp"

namespace dfi {

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;  // L2 term added to the gradient, weights only
};

// Adam with coupled L2 decay. Decay applies to conv/linear weights; biases and
// normalization parameters are exempt. Frozen parameters are skipped.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  void step();
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  double learning_rate() const { return config_.learning_rate; }
  int64_t steps_taken() const { return t_; }

  void save_state(std::ostream& out) const;
  void load_state(std::istream& in);

 private:
  ParameterSet* params_;
  AdamConfig config_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace dfi
