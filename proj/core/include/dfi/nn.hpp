#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dfi/autograd.hpp"
#include "dfi/ops.hpp"
#include "dfi/task.hpp"

namespace dfi {

using Rng = std::mt19937_64;

enum class ParamRole { Weight, Bias, Norm };

// Ownership groups used for the parameter breakdown.
enum class ParamGroup { Backbone, Ppm, DfimShared, Tam, TaskSpecific };

struct Parameter {
  std::string name;
  Var var;
  ParamRole role = ParamRole::Weight;
  ParamGroup group = ParamGroup::Backbone;
  std::optional<Task> owner;  // set for task-specific parameters
  bool trainable = true;

  int64_t numel() const { return var.value().numel(); }
};

// Stable-address registry of named parameters, in registration order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Shape shape, ParamRole role, ParamGroup group,
                 std::optional<Task> owner = std::nullopt, bool trainable = true);

  std::deque<Parameter>& items() { return items_; }
  const std::deque<Parameter>& items() const { return items_; }
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  int64_t total_count() const;
  void zero_grad();
  // Rounds every value to the nearest float32, the precision parameters are
  // stored at.
  void round_to_storage_precision();

 private:
  std::deque<Parameter> items_;
};

// He-normal for weights feeding a ReLU, zeros for biases.
void init_he_normal(Parameter& weight, int64_t fan_in, Rng& rng);
void init_uniform_fan_in(Parameter& weight, int64_t fan_in, Rng& rng);
void init_constant(Parameter& p, double value);

enum class PadMode { Zero, Replicate };

struct Conv2d {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;  // optional
  int kernel = 1;
  int stride = 1;
  int dilation = 1;
  int padding = 0;
  PadMode pad_mode = PadMode::Zero;

  static Conv2d create(ParameterSet& params, const std::string& name, int64_t in, int64_t out, int kernel,
                       ParamGroup group, std::optional<Task> owner, Rng& rng, bool with_bias, int stride = 1,
                       int dilation = 1, PadMode pad_mode = PadMode::Zero);
  Var operator()(const Var& x) const;
};

enum class NormKind { Group, FrozenBatch };

struct Norm {
  NormKind kind = NormKind::Group;
  int groups = 1;
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static Norm create(ParameterSet& params, const std::string& name, int64_t channels, NormKind kind,
                     int max_groups, ParamGroup group, std::optional<Task> owner);
  Var operator()(const Var& x) const;
};

struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParameterSet& params, const std::string& name, int64_t in, int64_t out, ParamGroup group,
                       std::optional<Task> owner, Rng& rng);
  Var operator()(const Var& x) const;
};

// gcd(channels, max_groups): the largest group count <= max_groups dividing channels.
int group_count(int64_t channels, int max_groups);

}  // namespace dfi
