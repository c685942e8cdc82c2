#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfi/task.hpp"
#include "dfi/tensor.hpp"

namespace dfi {

struct Sample {
  std::string id;
  Task task = Task::Saliency;
  Tensor image;  // (3, H, W) in [0, 1]
  Tensor gt;     // (1, H, W) in [0, 1]
};

// Ordered collection of samples for one task. Entries are held in memory or
// decoded from disk on access.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Task task, std::string name) : task_(task), name_(std::move(name)) {}

  void add(Sample sample);
  void add_files(std::string id, std::filesystem::path image_path, std::filesystem::path gt_path);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Sample get(std::size_t index) const;
  const std::string& id(std::size_t index) const { return entries_.at(index).id; }
  Task task() const { return task_; }
  const std::string& name() const { return name_; }

 private:
  struct Entry {
    std::string id;
    std::optional<Sample> sample;
    std::filesystem::path image_path, gt_path;
  };
  Task task_ = Task::Saliency;
  std::string name_;
  std::vector<Entry> entries_;
};

// root/images/<id>.png (RGB) paired with root/gt/<id>.png (gray), sorted by id.
// Unpaired files are skipped with a warning; an empty result is an IoError.
Dataset load_directory(const std::filesystem::path& root, Task task, std::string name = {});

// Writes the dataset in the load_directory layout.
void export_dataset(const Dataset& dataset, const std::filesystem::path& root);

// ---- Synthetic scenes with analytic groundtruth ----

enum class ShapeKind { Ellipse, Rectangle, Capsule };

struct SyntheticSpec {
  int canvas = 32;
  int min_shapes = 1;
  int max_shapes = 3;
  std::vector<ShapeKind> kinds{ShapeKind::Ellipse, ShapeKind::Rectangle, ShapeKind::Capsule};
  double texture_amplitude = 0.08;
  uint64_t seed = 0;

  void validate() const;
};

// Ellipse: semi-axes (a, b) rotated by angle. Rectangle: axis-aligned
// half-extents (a, b). Capsule: segment of half-length a along angle, radius b.
struct SyntheticShape {
  ShapeKind kind = ShapeKind::Ellipse;
  double cx = 0, cy = 0, a = 0, b = 0, angle = 0;
  bool salient = false;
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0) {}
  uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  bool inside(int y, int x) const { return y >= 0 && x >= 0 && y < height && x < width; }
  std::size_t count() const;
};

// Pixel centers at integer coordinates.
BinaryMask rasterize(const SyntheticShape& shape, int height, int width);

// Exact Euclidean distance from each foreground pixel to the nearest
// background pixel (outside the canvas counts as background); 0 on background.
std::vector<double> distance_transform(const BinaryMask& mask);

// Foreground pixels with a 4-neighbour outside the mask.
BinaryMask inner_boundary(const BinaryMask& mask);

// Ridge of the distance transform: an interior pixel is kept when stepping one
// pixel away from its nearest background point does not increase the distance.
BinaryMask medial_axis(const BinaryMask& mask);

struct SyntheticScene {
  Tensor image;  // (3, H, W)
  std::vector<SyntheticShape> shapes;
  BinaryMask saliency, edge, skeleton;
};

SyntheticScene generate_scene(const SyntheticSpec& spec, uint64_t index);

struct SyntheticSet {
  Dataset saliency, edge, skeleton;
  std::vector<SyntheticScene> scenes;

  const Dataset& for_task(Task task) const;
};

// Three datasets over the same images, ids "synth_<index>".
SyntheticSet generate_synthetic(const SyntheticSpec& spec, int count);

}  // namespace dfi
