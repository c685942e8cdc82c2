#include "dfi/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "dfi/error.hpp"

namespace dfi {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
    throw UsageError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add_inplace(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw UsageError("add_inplace shape mismatch " + shape_to_string(shape_) + " vs " +
                     shape_to_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

Tensor Tensor::slice_batch(int64_t n) const {
  Shape s = shape_;
  const int64_t per = numel() / s.at(0);
  s[0] = 1;
  std::vector<double> v(data_.begin() + n * per, data_.begin() + (n + 1) * per);
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::stack(const std::vector<Tensor>& samples) {
  if (samples.empty()) throw UsageError("stack of zero tensors");
  const Shape& first = samples.front().shape();
  Shape out_shape;
  out_shape.push_back(static_cast<int64_t>(samples.size()));
  // Samples may come with or without a leading unit batch axis.
  std::size_t skip = (first.size() == 4 && first[0] == 1) ? 1 : 0;
  out_shape.insert(out_shape.end(), first.begin() + static_cast<std::ptrdiff_t>(skip), first.end());
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(shape_numel(out_shape)));
  for (const Tensor& t : samples) {
    if (t.shape() != first) throw UsageError("stack: samples differ in shape");
    v.insert(v.end(), t.data_.begin(), t.data_.end());
  }
  return Tensor(std::move(out_shape), std::move(v));
}

}  // namespace dfi
