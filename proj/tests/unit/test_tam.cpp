#include <cmath>

#include "doctest.h"
#include "dfi/error.hpp"
#include "dfi/tam.hpp"
#include "helpers.hpp"

using namespace dfi;
using dfi::testing::max_grad_error;
using dfi::testing::project;
using dfi::testing::random_tensor;

namespace {
const std::vector<Task> kTasks{Task::Saliency, Task::Edge, Task::Skeleton};

TamConfig with_mode(TamMode m) {
  TamConfig c;
  c.mode = m;
  return c;
}
}  // namespace

TEST_CASE("off mode is the identity") {
  ParameterSet params;
  Rng rng(1);
  Tam tam(4, with_mode(TamMode::Off), kTasks, 4, params, rng);
  CHECK(params.items().empty());
  std::mt19937_64 drng(2);
  Var d = Var::constant(random_tensor({1, 16, 4, 4}, drng));
  CHECK(dfi::testing::same_values(tam.forward(d, Task::Edge).value(), d.value()));
  CHECK_THROWS_AS(tam.attention_map(d, Task::Edge), UsageError);
}

TEST_CASE("zeroed output layer halves the input") {
  ParameterSet params;
  Rng rng(3);
  Tam tam(4, TamConfig{}, kTasks, 4, params, rng);
  tam.zero_output_layer();
  std::mt19937_64 drng(4);
  Var d = Var::constant(random_tensor({2, 16, 4, 4}, drng));
  const Tensor out = tam.forward(d, Task::Saliency).value();
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(d.value()[i] / 2.0));
}

TEST_CASE("shared mode ignores the task id") {
  ParameterSet params;
  Rng rng(5);
  Tam tam(8, TamConfig{}, kTasks, 4, params, rng);
  std::mt19937_64 drng(6);
  Var d = Var::constant(random_tensor({1, 16, 4, 4}, drng));
  const Tensor a = tam.forward(d, Task::Saliency).value();
  CHECK(dfi::testing::same_values(a, tam.forward(d, Task::Edge).value()));
  CHECK(dfi::testing::same_values(a, tam.forward(d, Task::Skeleton).value()));
  for (const Parameter& p : params.items()) CHECK(p.group == ParamGroup::Tam);
}

TEST_CASE("attention map range, shape and constant input") {
  ParameterSet params;
  Rng rng(7);
  Tam tam(2, TamConfig{}, kTasks, 4, params, rng);
  std::mt19937_64 drng(8);
  Var d = Var::constant(random_tensor({2, 16, 5, 3}, drng, -3.0, 3.0));
  const Tensor a = tam.attention_map(d, Task::Edge).value();
  CHECK(a.shape() == Shape{2, 1, 5, 3});
  for (double v : a.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  Tensor c({1, 16, 4, 4});
  for (int ch = 0; ch < 16; ++ch)
    for (int i = 0; i < 16; ++i) c[ch * 16 + i] = 0.1 * ch - 0.5;
  const Tensor ac = tam.attention_map(Var::constant(c), Task::Edge).value();
  for (int i = 1; i < 16; ++i) CHECK(ac[i] == doctest::Approx(ac[0]).epsilon(1e-12));
  // |output| <= |input| elementwise.
  const Tensor out = tam.forward(d, Task::Edge).value();
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out[i]) <= std::abs(d.value()[i]));
}

TEST_CASE("unshared mode isolates tasks") {
  ParameterSet params;
  Rng rng(9);
  Tam tam(4, with_mode(TamMode::Unshared), kTasks, 4, params, rng);
  std::mt19937_64 drng(10);
  Var d = Var::constant(random_tensor({1, 16, 4, 4}, drng));
  const Tensor before_edge = tam.forward(d, Task::Edge).value();
  const Tensor before_sal = tam.forward(d, Task::Saliency).value();
  for (Parameter& p : params.items()) {
    CHECK(p.group == ParamGroup::TaskSpecific);
    if (p.owner == Task::Saliency)
      for (double& v : p.var.mutable_value().values()) v += 0.25;
  }
  CHECK(dfi::testing::same_values(tam.forward(d, Task::Edge).value(), before_edge));
  CHECK_FALSE(dfi::testing::same_values(tam.forward(d, Task::Saliency).value(), before_sal));
}

TEST_CASE("tam gradients match finite differences") {
  ParameterSet params;
  Rng rng(11);
  TamConfig cfg;
  cfg.channels = 4;
  Tam tam(4, cfg, kTasks, 2, params, rng);
  std::mt19937_64 drng(12);
  Var d = Var::leaf(random_tensor({1, 4, 4, 4}, drng), true);
  std::vector<Var> leaves{d};
  for (Parameter& p : params.items()) leaves.push_back(p.var);
  CHECK(max_grad_error([&] { return project(tam.forward(d, Task::Edge)); }, leaves) < 1e-4);
}

TEST_CASE("hidden width default and mode names") {
  TamConfig c;
  CHECK(c.resolved_hidden() == 8);
  c.channels = 6;
  CHECK(c.resolved_hidden() == 4);
  CHECK(parse_tam_mode("unshared") == TamMode::Unshared);
  CHECK_THROWS_AS(parse_tam_mode("independent-ish"), ConfigError);
}
