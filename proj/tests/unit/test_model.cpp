#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "dfi/checkpoint.hpp"
#include "dfi/error.hpp"
#include "dfi/model.hpp"
#include "helpers.hpp"

using namespace dfi;
using dfi::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.backbone.stage_channels = {4, 4, 8, 8, 8};
  c.backbone.ppm_channels = 8;
  c.backbone.ppm_bin_sizes = {1, 2};
  c.dfim.common_channels = 8;
  c.tam.channels = 8;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dfi_test_model_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("output shape equals input shape") {
  Model m(small_config());
  std::mt19937_64 rng(1);
  for (auto [h, w] : {std::pair{16, 16}, std::pair{20, 37}, std::pair{128, 96}, std::pair{5, 3}}) {
    const Tensor x = random_tensor({1, 3, h, w}, rng, 0.0, 1.0);
    CHECK(m.forward(x, Task::Edge).shape() == Shape{1, 1, h, w});
  }
}

TEST_CASE("single-task config builds only that branch") {
  ModelConfig c = small_config();
  c.tasks = {Task::Saliency};
  Model m(c);
  for (const Parameter& p : m.parameters().items()) {
    CHECK(p.name.find("edge") == std::string::npos);
    CHECK(p.name.find("skeleton") == std::string::npos);
  }
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  CHECK_NOTHROW(m.forward(x, Task::Saliency));
  CHECK_THROWS_AS(m.forward(x, Task::Edge), UsageError);
}

TEST_CASE("rate subsets build one DFIM per rate") {
  ModelConfig c = small_config();
  c.rates = {2, 4, 8};
  Model m(c);
  CHECK(m.dfims().size() == 3);
  CHECK(m.tams().size() == 3);
  c.rates = {2, 5};
  CHECK_THROWS_AS(Model{c}, ConfigError);
}

TEST_CASE("forward_all runs the backbone once and matches forward") {
  Model m(small_config());
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 3, 32, 16}, rng, 0.0, 1.0);
  const int before = m.backbone().forward_calls();
  std::map<Task, TaskTrace> traces;
  const auto all = m.forward_all(x, &traces);
  CHECK(m.backbone().forward_calls() == before + 1);
  CHECK(all.size() == 3);
  for (Task t : kAllTasks) {
    CHECK(dfi::testing::same_values(all.at(t).value(), m.forward(x, t).value()));
    CHECK(traces.at(t).profiles.size() == 4);
  }
  // Task heads disagree on the same pixels.
  CHECK_FALSE(dfi::testing::same_values(all.at(Task::Saliency).value(), all.at(Task::Skeleton).value()));
}

TEST_CASE("batch elements are independent") {
  Model m(small_config());
  std::mt19937_64 rng(4);
  const Tensor a = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  const Tensor b = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  const Tensor both = m.forward(Tensor::stack({a, b}), Task::Edge).value();
  const Tensor only_b = m.forward(Tensor::stack({b}), Task::Edge).value();
  for (int64_t i = 0; i < only_b.numel(); ++i) CHECK(both[256 + i] == doctest::Approx(only_b[i]).epsilon(1e-12));
}

TEST_CASE("parameter breakdown partitions the total") {
  for (TamMode mode : {TamMode::Shared, TamMode::Unshared, TamMode::Off}) {
    ModelConfig c = ModelConfig{};
    c.tam.mode = mode;
    Model m(c);
    const ParameterBreakdown b = m.parameter_breakdown();
    int64_t sum = b.backbone + b.ppm + b.dfims_shared + b.tams;
    for (const auto& [t, n] : b.per_task) sum += n;
    CHECK(sum == b.total);
    CHECK(b.total == m.parameters().total_count());
    CHECK(b.per_task.at(Task::Saliency) == b.per_task.at(Task::Edge));
    CHECK(b.per_task.at(Task::Edge) == b.per_task.at(Task::Skeleton));
    CHECK(b.shared_fraction() > 0.5);
    if (mode == TamMode::Shared) CHECK(b.tams > 0);
    else CHECK(b.tams == 0);
  }
}

TEST_CASE("removing a task removes only its branch") {
  ModelConfig all = small_config();
  ModelConfig two = small_config();
  two.tasks = {Task::Saliency, Task::Skeleton};
  for (TamMode mode : {TamMode::Shared, TamMode::Unshared}) {
    all.tam.mode = two.tam.mode = mode;
    Model a(all), b(two);
    std::set<std::string> names_b;
    for (const Parameter& p : b.parameters().items()) names_b.insert(p.name);
    for (const Parameter& p : a.parameters().items()) {
      const bool edge_branch = p.owner == Task::Edge;
      CHECK(names_b.count(p.name) == (edge_branch ? 0u : 1u));
      if (!edge_branch) CHECK(b.parameters().find(p.name)->var.value().shape() == p.var.value().shape());
    }
  }
}

TEST_CASE("parameters hold float32-representable values") {
  Model m(small_config());
  for (const Parameter& p : m.parameters().items())
    for (double v : p.var.value().values()) CHECK(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const fs::path dir = temp_dir("roundtrip");
  ModelConfig c = small_config();
  c.init_seed = 9;
  c.tasks = {Task::Edge, Task::Skeleton};
  Model m(c);
  CheckpointMeta meta;
  meta.model = c;
  meta.step = 42;
  meta.epoch = 3;
  meta.seed = 9;
  save_checkpoint(dir / "m.ckpt", m, meta);
  CheckpointMeta loaded;
  auto back = load_model(dir / "m.ckpt", &loaded);
  CHECK(loaded.step == 42);
  CHECK(loaded.epoch == 3);
  CHECK(loaded.seed == 9);
  CHECK(back->config().tasks == std::vector<Task>{Task::Edge, Task::Skeleton});
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({1, 3, 24, 20}, rng, 0.0, 1.0);
  CHECK(dfi::testing::same_values(m.forward(x, Task::Skeleton).value(), back->forward(x, Task::Skeleton).value()));
}

TEST_CASE("checkpoint errors carry the path") {
  const fs::path dir = temp_dir("errors");
  CHECK_THROWS_WITH_AS(read_checkpoint(dir / "missing.ckpt"), doctest::Contains("missing.ckpt"), IoError);
  {
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "junk.ckpt"), IoError);
  Model a(small_config());
  CheckpointMeta meta;
  meta.model = a.config();
  save_checkpoint(dir / "a.ckpt", a, meta);
  ModelConfig other = small_config();
  other.tasks = {Task::Saliency};
  Model b(other);
  CHECK_THROWS_AS(load_parameters(b, read_checkpoint(dir / "a.ckpt")), IoError);
}
