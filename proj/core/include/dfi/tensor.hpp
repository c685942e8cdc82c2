#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dfi {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles. Rank is usually 4 (batch, channel,
// height, width) for feature maps and 2 for per-sample vectors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(double value);
  void add_inplace(const Tensor& other);

  // Copy of sample `n` along axis 0, keeping a leading batch axis of 1.
  Tensor slice_batch(int64_t n) const;

  static Tensor stack(const std::vector<Tensor>& samples);

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace dfi
