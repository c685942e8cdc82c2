#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dfi/autograd.hpp"
#include "dfi/tensor.hpp"

namespace dfi::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline bool same_values(const Tensor& a, const Tensor& b) {
  return std::ranges::equal(a.values(), b.values());
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-7) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

// Central difference of `f` with respect to element `index` of `x`.
inline double numeric_grad(const std::function<double()>& f, Tensor& x, int64_t index, double h = 1e-6) {
  const double saved = x[index];
  x[index] = saved + h;
  const double up = f();
  x[index] = saved - h;
  const double down = f();
  x[index] = saved;
  return (up - down) / (2.0 * h);
}

// Max relative error between backward() and finite differences for every
// element of every leaf. `loss` must rebuild the graph from the leaves.
inline double max_grad_error(const std::function<Var()>& loss, std::vector<Var>& leaves, double h = 1e-6) {
  for (Var& v : leaves) v.zero_grad();
  backward(loss());
  double worst = 0.0;
  for (Var& v : leaves) {
    const Tensor analytic = v.grad().empty() ? Tensor(v.shape(), 0.0) : v.grad();
    for (int64_t i = 0; i < v.value().numel(); ++i) {
      const double n = numeric_grad([&] { return loss().value()[0]; }, v.mutable_value(), i, h);
      worst = std::max(worst, relative_error(analytic[i], n));
    }
  }
  return worst;
}

// Fixed random weighting sum(w_i * y_i), turning any output into a scalar.
inline Var project(const Var& y, uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  const Tensor w = random_tensor(y.shape(), rng);
  double acc = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) acc += w[i] * y.value()[i];
  return make_op_result(Tensor({1}, acc), {y}, [y, w](Node& self) {
    Tensor& g = y.node()->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0] * w[i];
  });
}

}  // namespace dfi::testing
