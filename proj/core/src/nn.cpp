#include "dfi/nn.hpp"

#include <cmath>
#include <numeric>

#include "dfi/error.hpp"

namespace dfi {

Parameter& ParameterSet::add(std::string name, Shape shape, ParamRole role, ParamGroup group,
                             std::optional<Task> owner, bool trainable) {
  if (find(name)) throw UsageError("duplicate parameter name " + name);
  Parameter p;
  p.name = std::move(name);
  p.var = Var::leaf(Tensor(std::move(shape), 0.0), trainable);
  p.role = role;
  p.group = group;
  p.owner = owner;
  p.trainable = trainable;
  items_.push_back(std::move(p));
  return items_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (Parameter& p : items_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const Parameter& p : items_)
    if (p.name == name) return &p;
  return nullptr;
}

int64_t ParameterSet::total_count() const {
  int64_t n = 0;
  for (const Parameter& p : items_) n += p.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (Parameter& p : items_) p.var.zero_grad();
}

void ParameterSet::round_to_storage_precision() {
  for (Parameter& p : items_)
    for (double& v : p.var.mutable_value().values()) v = static_cast<double>(static_cast<float>(v));
}

void init_he_normal(Parameter& weight, int64_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : weight.var.mutable_value().values()) v = dist(rng);
}

void init_uniform_fan_in(Parameter& weight, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : weight.var.mutable_value().values()) v = dist(rng);
}

void init_constant(Parameter& p, double value) { p.var.mutable_value().fill(value); }

int group_count(int64_t channels, int max_groups) {
  return static_cast<int>(std::gcd(channels, static_cast<int64_t>(std::max(1, max_groups))));
}

Conv2d Conv2d::create(ParameterSet& params, const std::string& name, int64_t in, int64_t out, int kernel,
                      ParamGroup group, std::optional<Task> owner, Rng& rng, bool with_bias, int stride,
                      int dilation, PadMode pad_mode) {
  Conv2d conv;
  conv.kernel = kernel;
  conv.stride = stride;
  conv.dilation = dilation;
  conv.padding = dilation * (kernel - 1) / 2;
  conv.pad_mode = pad_mode;
  conv.weight = &params.add(name + ".weight", {out, in, kernel, kernel}, ParamRole::Weight, group, owner);
  init_he_normal(*conv.weight, in * kernel * kernel, rng);
  if (with_bias) conv.bias = &params.add(name + ".bias", {out}, ParamRole::Bias, group, owner);
  return conv;
}

Var Conv2d::operator()(const Var& x) const {
  const Var b = bias ? bias->var : Var();
  if (pad_mode == PadMode::Replicate && padding > 0) {
    return ops::conv2d(ops::pad_replicate(x, padding, padding, padding, padding), weight->var, b,
                       {stride, 0, dilation});
  }
  return ops::conv2d(x, weight->var, b, {stride, padding, dilation});
}

Norm Norm::create(ParameterSet& params, const std::string& name, int64_t channels, NormKind kind, int max_groups,
                  ParamGroup group, std::optional<Task> owner) {
  Norm n;
  n.kind = kind;
  n.groups = group_count(channels, max_groups);
  // Frozen statistics at toy scale reduce to a fixed per-channel affine map.
  const bool trainable = kind == NormKind::Group;
  n.gamma = &params.add(name + ".gamma", {channels}, ParamRole::Norm, group, owner, trainable);
  n.beta = &params.add(name + ".beta", {channels}, ParamRole::Norm, group, owner, trainable);
  init_constant(*n.gamma, 1.0);
  return n;
}

Var Norm::operator()(const Var& x) const {
  if (kind == NormKind::Group) return ops::group_norm(x, gamma->var, beta->var, groups);
  return ops::channel_affine(x, gamma->var, beta->var);
}

Linear Linear::create(ParameterSet& params, const std::string& name, int64_t in, int64_t out, ParamGroup group,
                      std::optional<Task> owner, Rng& rng) {
  Linear l;
  l.weight = &params.add(name + ".weight", {out, in}, ParamRole::Weight, group, owner);
  l.bias = &params.add(name + ".bias", {out}, ParamRole::Bias, group, owner);
  init_uniform_fan_in(*l.weight, in, rng);
  init_uniform_fan_in(*l.bias, in, rng);
  return l;
}

Var Linear::operator()(const Var& x) const { return ops::linear(x, weight->var, bias->var); }

}  // namespace dfi
