#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dfi/data.hpp"
#include "dfi/error.hpp"
#include "dfi/image_io.hpp"
#include "dfi/log.hpp"
#include "helpers.hpp"

using namespace dfi;
using dfi::testing::same_values;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dfi_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Image8 solid(int h, int w, int channels, uint8_t v) {
  Image8 img;
  img.height = h;
  img.width = w;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(h * w * channels), v);
  return img;
}

int neighbours8(const BinaryMask& m, int y, int x) {
  int n = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if ((dy || dx) && m.inside(y + dy, x + dx) && m.at(y + dy, x + dx)) ++n;
  return n;
}

}  // namespace

TEST_CASE("load_directory pairs files, sorts ids and skips orphans") {
  const fs::path root = temp_dir("pairs");
  fs::create_directories(root / "images");
  fs::create_directories(root / "gt");
  for (const char* id : {"c", "a", "b"}) {
    write_png(root / "images" / (std::string(id) + ".png"), solid(4, 6, 3, 128));
    write_png(root / "gt" / (std::string(id) + ".png"), solid(4, 6, 1, 255));
  }
  write_png(root / "images" / "orphan.png", solid(4, 6, 3, 0));
  log::reset_warning_count();
  const Dataset ds = load_directory(root, Task::Edge);
  CHECK(ds.size() == 3);
  CHECK(log::warning_count() == 1);
  CHECK(ds.id(0) == "a");
  CHECK(ds.id(1) == "b");
  CHECK(ds.id(2) == "c");
  const Sample s = ds.get(1);
  CHECK(s.task == Task::Edge);
  CHECK(s.image.shape() == Shape{3, 4, 6});
  CHECK(s.gt.shape() == Shape{1, 4, 6});
  for (double v : s.gt.values()) CHECK(v == 1.0);
  for (double v : s.image.values()) CHECK(v == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("load_directory errors") {
  const fs::path root = temp_dir("errors");
  CHECK_THROWS_WITH_AS(load_directory(root, Task::Saliency), doctest::Contains("images"), IoError);
  fs::create_directories(root / "images");
  fs::create_directories(root / "gt");
  CHECK_THROWS_AS(load_directory(root, Task::Saliency), IoError);
  write_png(root / "images" / "x.png", solid(4, 6, 3, 1));
  write_png(root / "gt" / "x.png", solid(5, 6, 1, 1));
  CHECK_THROWS_AS(load_directory(root, Task::Saliency).get(0), IoError);
}

TEST_CASE("rectangle medial axis contains the central row") {
  SyntheticShape r;
  r.kind = ShapeKind::Rectangle;
  r.cx = 15;
  r.cy = 10;
  r.a = 10;
  r.b = 4;
  const BinaryMask m = rasterize(r, 21, 31);
  CHECK(m.count() == 21u * 9u);
  const BinaryMask sk = medial_axis(m);
  for (int x = 10; x <= 20; ++x) CHECK(sk.at(10, x) == 1);
  CHECK(sk.at(7, 15) == 0);
  CHECK(sk.at(13, 15) == 0);
}

TEST_CASE("disk medial axis is its center") {
  SyntheticShape d;
  d.cx = 12;
  d.cy = 12;
  d.a = 8;
  d.b = 8;
  const BinaryMask m = rasterize(d, 25, 25);
  const BinaryMask sk = medial_axis(m);
  CHECK(sk.at(12, 12) == 1);
  for (int y = 0; y < 25; ++y)
    for (int x = 0; x < 25; ++x)
      if (sk.at(y, x)) CHECK((y - 12) * (y - 12) + (x - 12) * (x - 12) <= 4);
}

TEST_CASE("distance transform of a single pixel and a row") {
  BinaryMask m(5, 5);
  m.at(2, 2) = 1;
  const auto d = distance_transform(m);
  CHECK(d[12] == 1.0);
  CHECK(d[0] == 0.0);
  BinaryMask row(3, 9);
  for (int x = 0; x < 9; ++x)
    for (int y = 0; y < 3; ++y) row.at(y, x) = 1;
  const auto dr = distance_transform(row);
  CHECK(dr[9 + 4] == 2.0);
  CHECK(dr[4] == 1.0);
}

TEST_CASE("synthetic groundtruth invariants") {
  SyntheticSpec spec;
  spec.canvas = 48;
  spec.seed = 3;
  for (uint64_t i = 0; i < 20; ++i) {
    const SyntheticScene s = generate_scene(spec, i);
    CHECK(s.image.shape() == Shape{3, 48, 48});
    for (double v : s.image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    BinaryMask all(48, 48);
    for (const SyntheticShape& shape : s.shapes) {
      const BinaryMask r = rasterize(shape, 48, 48);
      for (std::size_t k = 0; k < r.bits.size(); ++k) all.bits[k] |= r.bits[k];
    }
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        if (s.saliency.at(y, x)) CHECK(all.at(y, x));
        if (s.skeleton.at(y, x)) CHECK(all.at(y, x));
        if (s.edge.at(y, x)) CHECK(neighbours8(s.edge, y, x) >= 1);
      }
    CHECK(s.edge.count() > 0);
    CHECK(s.skeleton.count() > 0);
  }
}

TEST_CASE("edge of a single shape is a closed curve around its interior") {
  SyntheticShape e;
  e.cx = 16;
  e.cy = 16;
  e.a = 10;
  e.b = 6;
  e.angle = 0.4;
  const BinaryMask m = rasterize(e, 32, 32);
  const BinaryMask edge = inner_boundary(m);
  const BinaryMask sk = medial_axis(m);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (edge.at(y, x)) {
        CHECK(m.at(y, x));
        CHECK(neighbours8(edge, y, x) >= 2);
      }
      if (sk.at(y, x)) {
        CHECK(m.at(y, x));
        CHECK_FALSE(edge.at(y, x));
      }
    }
}

TEST_CASE("synthetic data is reproducible and seed dependent") {
  SyntheticSpec spec;
  spec.seed = 5;
  const SyntheticSet a = generate_synthetic(spec, 4);
  const SyntheticSet b = generate_synthetic(spec, 4);
  spec.seed = 6;
  const SyntheticSet c = generate_synthetic(spec, 4);
  CHECK(a.saliency.size() == 4);
  CHECK(a.edge.id(2) == "synth_2");
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(same_values(a.edge.get(i).image, b.edge.get(i).image));
    CHECK(same_values(a.skeleton.get(i).gt, b.skeleton.get(i).gt));
  }
  CHECK_FALSE(same_values(a.edge.get(0).image, c.edge.get(0).image));
  CHECK(same_values(a.saliency.get(1).image, a.edge.get(1).image));
}

TEST_CASE("exported datasets load back identically") {
  SyntheticSpec spec;
  const SyntheticSet set = generate_synthetic(spec, 3);
  const fs::path root = temp_dir("export");
  export_dataset(set.skeleton, root);
  const Dataset back = load_directory(root, Task::Skeleton);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.id(i) == set.skeleton.id(i));
    CHECK(same_values(back.get(i).gt, set.skeleton.get(i).gt));
    const Tensor orig = set.skeleton.get(i).image;
    const Tensor img = back.get(i).image;
    for (int64_t k = 0; k < orig.numel(); ++k) CHECK(std::abs(img[k] - orig[k]) <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s;
  s.canvas = 8;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.min_shapes = 4;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.kinds.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
