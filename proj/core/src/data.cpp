#include "dfi/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "dfi/error.hpp"
#include "dfi/image_io.hpp"
#include "dfi/log.hpp"

namespace dfi {

namespace fs = std::filesystem;
using Rng = std::mt19937_64;

void Dataset::add(Sample sample) {
  Entry e;
  e.id = sample.id;
  e.sample = std::move(sample);
  entries_.push_back(std::move(e));
}

void Dataset::add_files(std::string id, fs::path image_path, fs::path gt_path) {
  entries_.push_back(Entry{std::move(id), std::nullopt, std::move(image_path), std::move(gt_path)});
}

Sample Dataset::get(std::size_t index) const {
  const Entry& e = entries_.at(index);
  if (e.sample) return *e.sample;
  Sample s;
  s.id = e.id;
  s.task = task_;
  s.image = to_tensor(read_png(e.image_path, 3));
  s.gt = to_tensor(read_png(e.gt_path, 1));
  if (s.image.dim(1) != s.gt.dim(1) || s.image.dim(2) != s.gt.dim(2)) {
    throw IoError("image " + e.image_path.string() + " and groundtruth " + e.gt_path.string() + " differ in size");
  }
  return s;
}

Dataset load_directory(const fs::path& root, Task task, std::string name) {
  const fs::path images = root / "images";
  const fs::path gts = root / "gt";
  for (const fs::path& dir : {images, gts}) {
    if (!fs::is_directory(dir)) throw IoError("missing directory " + dir.string());
  }
  auto list = [](const fs::path& dir) {
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") out.emplace(entry.path().stem().string(), entry.path());
    }
    return out;
  };
  const auto image_files = list(images);
  const auto gt_files = list(gts);
  Dataset ds(task, name.empty() ? root.filename().string() : std::move(name));
  for (const auto& [id, path] : image_files) {
    auto it = gt_files.find(id);
    if (it == gt_files.end()) {
      log::warn("no groundtruth for image " + path.string() + "; skipped");
      continue;
    }
    ds.add_files(id, path, it->second);
  }
  for (const auto& [id, path] : gt_files) {
    if (!image_files.count(id)) log::warn("no image for groundtruth " + path.string() + "; skipped");
  }
  if (ds.empty()) throw IoError("no image/groundtruth pairs under " + root.string());
  return ds;
}

void export_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "gt");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample s = dataset.get(i);
    write_png(root / "images" / (s.id + ".png"), to_image8(s.image));
    write_png(root / "gt" / (s.id + ".png"), to_image8(s.gt));
  }
}

// ---- masks and groundtruth ----

std::size_t BinaryMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

BinaryMask rasterize(const SyntheticShape& s, int height, int width) {
  BinaryMask m(height, width);
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = x - s.cx, dy = y - s.cy;
      bool in = false;
      switch (s.kind) {
        case ShapeKind::Ellipse: {
          const double u = dx * c + dy * sn, v = -dx * sn + dy * c;
          in = (u * u) / (s.a * s.a) + (v * v) / (s.b * s.b) <= 1.0;
          break;
        }
        case ShapeKind::Rectangle: in = std::abs(dx) <= s.a && std::abs(dy) <= s.b; break;
        case ShapeKind::Capsule: {
          // Distance to the segment [-a, a] along the axis direction.
          const double u = std::clamp(dx * c + dy * sn, -s.a, s.a);
          const double px = dx - u * c, py = dy - u * sn;
          in = px * px + py * py <= s.b * s.b;
          break;
        }
      }
      if (in) m.at(y, x) = 1;
    }
  return m;
}

namespace {

struct NearestBackground {
  std::vector<double> distance;
  std::vector<int> qy, qx;  // nearest background pixel per foreground pixel
};

// Brute force over background pixels 4-adjacent to the foreground; the
// nearest background pixel of any foreground pixel is always one of them.
NearestBackground nearest_background(const BinaryMask& mask) {
  const int h = mask.height, w = mask.width;
  std::vector<std::pair<int, int>> candidates;
  std::set<std::pair<int, int>> seen;
  const int dy4[] = {-1, 1, 0, 0}, dx4[] = {0, 0, -1, 1};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      for (int k = 0; k < 4; ++k) {
        const int ny = y + dy4[k], nx = x + dx4[k];
        if (mask.inside(ny, nx) && mask.at(ny, nx)) continue;
        if (seen.insert({ny, nx}).second) candidates.emplace_back(ny, nx);
      }
    }
  NearestBackground out;
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  out.distance.assign(n, 0.0);
  out.qy.assign(n, -1);
  out.qx.assign(n, -1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      long best = std::numeric_limits<long>::max();
      int by = -1, bx = -1;
      for (const auto& [cy, cx] : candidates) {
        const long d = static_cast<long>(cy - y) * (cy - y) + static_cast<long>(cx - x) * (cx - x);
        if (d < best) {
          best = d;
          by = cy;
          bx = cx;
        }
      }
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
      out.distance[i] = std::sqrt(static_cast<double>(best));
      out.qy[i] = by;
      out.qx[i] = bx;
    }
  return out;
}

double sample_bilinear(const std::vector<double>& field, int h, int w, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto at = [&](int yy, int xx) {
    if (yy < 0 || xx < 0 || yy >= h || xx >= w) return 0.0;
    return field[static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx)];
  };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

}  // namespace

std::vector<double> distance_transform(const BinaryMask& mask) { return nearest_background(mask).distance; }

BinaryMask inner_boundary(const BinaryMask& mask) {
  BinaryMask out(mask.height, mask.width);
  const int dy4[] = {-1, 1, 0, 0}, dx4[] = {0, 0, -1, 1};
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      for (int k = 0; k < 4; ++k) {
        const int ny = y + dy4[k], nx = x + dx4[k];
        if (!mask.inside(ny, nx) || !mask.at(ny, nx)) {
          out.at(y, x) = 1;
          break;
        }
      }
    }
  return out;
}

BinaryMask medial_axis(const BinaryMask& mask) {
  const NearestBackground nb = nearest_background(mask);
  const BinaryMask boundary = inner_boundary(mask);
  BinaryMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x) || boundary.at(y, x)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(mask.width) + static_cast<std::size_t>(x);
      const double d = nb.distance[i];
      const double uy = (y - nb.qy[i]) / d, ux = (x - nb.qx[i]) / d;
      const double ahead = sample_bilinear(nb.distance, mask.height, mask.width, y + uy, x + ux);
      if (d >= ahead - 1e-9) out.at(y, x) = 1;
    }
  return out;
}

// ---- synthetic scenes ----

void SyntheticSpec::validate() const {
  if (canvas < 32) throw ConfigError("synthetic.canvas must be >= 32");
  if (min_shapes < 1) throw ConfigError("synthetic.min_shapes must be >= 1");
  if (max_shapes < min_shapes) throw ConfigError("synthetic.max_shapes must be >= min_shapes");
  if (kinds.empty()) throw ConfigError("synthetic.kinds must not be empty");
  if (texture_amplitude < 0.0) throw ConfigError("synthetic.texture_amplitude must be >= 0");
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

SyntheticShape random_shape(const SyntheticSpec& spec, Rng& rng) {
  SyntheticShape s;
  s.kind = spec.kinds[std::uniform_int_distribution<std::size_t>(0, spec.kinds.size() - 1)(rng)];
  const double smax = spec.canvas / 4.0;
  double extent = 0.0;
  switch (s.kind) {
    case ShapeKind::Ellipse:
      s.a = uniform(rng, 3.0, smax);
      s.b = uniform(rng, 3.0, smax);
      s.angle = uniform(rng, 0.0, std::numbers::pi);
      extent = std::max(s.a, s.b);
      break;
    case ShapeKind::Rectangle:
      s.a = uniform(rng, 2.5, smax);
      s.b = uniform(rng, 2.5, smax);
      extent = std::hypot(s.a, s.b);
      break;
    case ShapeKind::Capsule:
      s.a = uniform(rng, 2.0, smax - 2.0);
      s.b = uniform(rng, 2.5, 4.0);
      s.angle = uniform(rng, 0.0, std::numbers::pi);
      extent = s.a + s.b;
      break;
  }
  const double lo = 2.0 + extent, hi = spec.canvas - 3.0 - extent;
  s.cx = hi > lo ? uniform(rng, lo, hi) : spec.canvas / 2.0;
  s.cy = hi > lo ? uniform(rng, lo, hi) : spec.canvas / 2.0;
  return s;
}

bool touches_border(const BinaryMask& m) {
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x) && (y < 1 || x < 1 || y >= m.height - 1 || x >= m.width - 1)) return true;
  return false;
}

// True when the masks come within two pixels (Chebyshev) of each other.
bool too_close(const BinaryMask& a, const BinaryMask& b) {
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (!a.at(y, x)) continue;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx)
          if (b.inside(y + dy, x + dx) && b.at(y + dy, x + dx)) return true;
    }
  return false;
}

}  // namespace

SyntheticScene generate_scene(const SyntheticSpec& spec, uint64_t index) {
  spec.validate();
  std::seed_seq seq{static_cast<uint32_t>(spec.seed), static_cast<uint32_t>(spec.seed >> 32),
                    static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32)};
  Rng rng(seq);
  const int n = spec.canvas;
  const int wanted = std::uniform_int_distribution<int>(spec.min_shapes, spec.max_shapes)(rng);

  SyntheticScene scene;
  std::vector<BinaryMask> masks;
  for (int attempt = 0; attempt < 200 && static_cast<int>(masks.size()) < wanted; ++attempt) {
    SyntheticShape s = random_shape(spec, rng);
    BinaryMask m = rasterize(s, n, n);
    if (m.count() < 9 || touches_border(m)) continue;
    bool clash = false;
    for (const BinaryMask& other : masks) clash = clash || too_close(m, other);
    if (clash) continue;
    scene.shapes.push_back(s);
    masks.push_back(std::move(m));
  }
  if (masks.empty()) {
    SyntheticShape s{ShapeKind::Ellipse, n / 2.0, n / 2.0, n / 5.0, n / 6.0, 0.0, true};
    scene.shapes.push_back(s);
    masks.push_back(rasterize(s, n, n));
  }

  // Each shape is salient with probability 1/2, redrawn until at least one is.
  std::bernoulli_distribution coin(0.5);
  for (;;) {
    bool any = false;
    for (SyntheticShape& s : scene.shapes) any |= (s.salient = coin(rng));
    if (any) break;
  }

  std::array<double, 3> background{};
  for (double& c : background) c = uniform(rng, 0.15, 0.85);
  const double fx = uniform(rng, 1.0, 3.0), fy = uniform(rng, 1.0, 3.0);
  std::array<double, 3> phase{};
  for (double& p : phase) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  scene.image = Tensor({3, n, n});
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double t = std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) / n + phase[static_cast<std::size_t>(ch)]);
        scene.image[(ch * n + y) * n + x] = background[static_cast<std::size_t>(ch)] + spec.texture_amplitude * t;
      }

  scene.saliency = BinaryMask(n, n);
  scene.edge = BinaryMask(n, n);
  scene.skeleton = BinaryMask(n, n);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    std::array<double, 3> color{};
    for (int tries = 0; tries < 50; ++tries) {
      double dist = 0.0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        color[ch] = uniform(rng, 0.0, 1.0);
        dist += std::abs(color[ch] - background[ch]);
      }
      if (dist > 0.6) break;
    }
    const BinaryMask& m = masks[k];
    const BinaryMask edge = inner_boundary(m);
    const BinaryMask skel = medial_axis(m);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if (!m.at(y, x)) continue;
        for (int ch = 0; ch < 3; ++ch) scene.image[(ch * n + y) * n + x] = color[static_cast<std::size_t>(ch)];
        if (scene.shapes[k].salient) scene.saliency.at(y, x) = 1;
        if (edge.at(y, x)) scene.edge.at(y, x) = 1;
        if (skel.at(y, x)) scene.skeleton.at(y, x) = 1;
      }
  }
  for (double& v : scene.image.values()) v = std::clamp(v, 0.0, 1.0);
  return scene;
}

const Dataset& SyntheticSet::for_task(Task task) const {
  switch (task) {
    case Task::Saliency: return saliency;
    case Task::Edge: return edge;
    case Task::Skeleton: return skeleton;
  }
  throw UsageError("unknown task");
}

SyntheticSet generate_synthetic(const SyntheticSpec& spec, int count) {
  spec.validate();
  SyntheticSet set{Dataset(Task::Saliency, "synthetic"), Dataset(Task::Edge, "synthetic"),
                   Dataset(Task::Skeleton, "synthetic"), {}};
  auto to_gt = [](const BinaryMask& m) {
    Tensor t({1, m.height, m.width});
    for (std::size_t i = 0; i < m.bits.size(); ++i) t[static_cast<int64_t>(i)] = m.bits[i];
    return t;
  };
  for (int i = 0; i < count; ++i) {
    SyntheticScene scene = generate_scene(spec, static_cast<uint64_t>(i));
    const std::string id = "synth_" + std::to_string(i);
    set.saliency.add({id, Task::Saliency, scene.image, to_gt(scene.saliency)});
    set.edge.add({id, Task::Edge, scene.image, to_gt(scene.edge)});
    set.skeleton.add({id, Task::Skeleton, scene.image, to_gt(scene.skeleton)});
    set.scenes.push_back(std::move(scene));
  }
  return set;
}

}  // namespace dfi
