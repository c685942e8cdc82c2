#include "doctest.h"
#include "dfi/backbone.hpp"
#include "dfi/error.hpp"
#include "helpers.hpp"

using namespace dfi;
using dfi::testing::max_grad_error;
using dfi::testing::project;
using dfi::testing::random_tensor;

namespace {

struct Built {
  ParameterSet params;
  std::unique_ptr<Backbone> backbone;
};

std::unique_ptr<Built> build(const BackboneConfig& cfg, uint64_t seed = 0) {
  auto b = std::make_unique<Built>();
  Rng rng(seed);
  b->backbone = std::make_unique<Backbone>(cfg, b->params, rng);
  return b;
}

BackboneConfig tiny() {
  BackboneConfig c;
  c.stage_channels = {2, 2, 4, 4, 4};
  c.ppm_channels = 4;
  c.ppm_bin_sizes = {1, 2};
  c.norm_groups = 1;
  return c;
}

}  // namespace

TEST_CASE("default backbone stage sizes for a 64x64 input") {
  auto b = build(BackboneConfig{});
  std::mt19937_64 rng(1);
  const FeatureBank bank = b->backbone->forward(Var::constant(random_tensor({1, 3, 64, 64}, rng)));
  REQUIRE(bank.stages.size() == 6);
  const int expected[6] = {32, 16, 8, 4, 4, 4};
  const int64_t channels[6] = {8, 16, 32, 64, 64, 64};
  for (int i = 0; i < 6; ++i) {
    CHECK(bank.stages[static_cast<std::size_t>(i)].dim(2) == expected[i]);
    CHECK(bank.stages[static_cast<std::size_t>(i)].dim(3) == expected[i]);
    CHECK(bank.channels(static_cast<std::size_t>(i)) == channels[i]);
  }
  CHECK(bank.strides == std::array<int, 6>{2, 4, 8, 16, 16, 16});
}

TEST_CASE("non-square batched input keeps the stride layout") {
  auto b = build(BackboneConfig{});
  std::mt19937_64 rng(2);
  const FeatureBank bank = b->backbone->forward(Var::constant(random_tensor({2, 3, 96, 64}, rng)));
  CHECK(bank.stages[3].shape() == Shape{2, 64, 6, 4});
  CHECK(bank.stages[5].shape() == Shape{2, 64, 6, 4});
}

TEST_CASE("backbone rejects spatial sizes that are not multiples of 16") {
  auto b = build(BackboneConfig{});
  CHECK_THROWS_AS(b->backbone->forward(Var::constant(Tensor({1, 3, 40, 32}, 0.5))), UsageError);
}

TEST_CASE("invalid backbone configs name the field") {
  BackboneConfig c;
  c.stage_channels = {8, 16};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("stage_channels"), ConfigError);
  c = BackboneConfig{};
  c.ppm_channels = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("ppm_channels"), ConfigError);
  c = BackboneConfig{};
  c.num_stages = 5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("num_stages"), ConfigError);
  c = BackboneConfig{};
  c.ppm_bin_sizes = {1, 0};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("ppm_bin_sizes"), ConfigError);
}

TEST_CASE("ppm keeps the input resolution and channel count") {
  auto b = build(BackboneConfig{});
  std::mt19937_64 rng(3);
  const Var out = b->backbone->ppm_forward(Var::constant(random_tensor({1, 64, 4, 4}, rng)));
  CHECK(out.shape() == Shape{1, 64, 4, 4});
}

TEST_CASE("ppm on a constant map is spatially constant") {
  auto b = build(BackboneConfig{});
  Tensor in({1, 64, 4, 4});
  for (int c = 0; c < 64; ++c)
    for (int i = 0; i < 16; ++i) in[c * 16 + i] = 0.01 * c;
  const Tensor out = b->backbone->ppm_forward(Var::constant(in)).value();
  for (int c = 0; c < 64; ++c)
    for (int i = 1; i < 16; ++i) CHECK(out[c * 16 + i] == doctest::Approx(out[c * 16]).epsilon(1e-12));
}

TEST_CASE("ppm of zero input is zero") {
  auto b = build(BackboneConfig{});
  const Tensor out = b->backbone->ppm_forward(Var::constant(Tensor({1, 64, 4, 4}, 0.0))).value();
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("ppm bins larger than the map are clamped") {
  auto b = build(BackboneConfig{});
  std::mt19937_64 rng(4);
  CHECK(b->backbone->ppm_forward(Var::constant(random_tensor({1, 64, 2, 3}, rng))).shape() == Shape{1, 64, 2, 3});
}

TEST_CASE("backbone forward is deterministic") {
  auto a = build(BackboneConfig{}, 5);
  auto b = build(BackboneConfig{}, 5);
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({1, 3, 32, 32}, rng);
  const FeatureBank fa = a->backbone->forward(Var::constant(x));
  const FeatureBank fb = b->backbone->forward(Var::constant(x));
  for (int i = 0; i < 6; ++i) CHECK(dfi::testing::same_values(fa.stages[static_cast<std::size_t>(i)].value(), fb.stages[static_cast<std::size_t>(i)].value()));
}

TEST_CASE("backbone parameter gradients match finite differences") {
  auto b = build(tiny(), 7);
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
  std::vector<Var> leaves;
  for (Parameter& p : b->params.items()) leaves.push_back(p.var);
  auto loss = [&] {
    const FeatureBank bank = b->backbone->forward(Var::constant(x));
    std::vector<Var> terms;
    for (std::size_t i = 0; i < bank.stages.size(); ++i) terms.push_back(project(bank.stages[i], 11 + i));
    return ops::sum_scalars(terms);
  };
  CHECK(max_grad_error(loss, leaves) < 1e-3);
}

TEST_CASE("frozen batch norm switch freezes the affine parameters") {
  BackboneConfig c = tiny();
  c.norm = NormKind::FrozenBatch;
  auto b = build(c);
  int frozen = 0;
  for (const Parameter& p : b->params.items())
    if (p.name.rfind("backbone.", 0) == 0 && p.role == ParamRole::Norm) {
      CHECK_FALSE(p.trainable);
      ++frozen;
    }
  CHECK(frozen == 20);
}
