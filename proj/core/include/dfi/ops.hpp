#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfi/autograd.hpp"

// Differentiable tensor kernels. Feature maps are (batch, channels, height,
// width); per-sample vectors are (batch, features).
namespace dfi::ops {

struct ConvGeometry {
  int stride = 1;
  int padding = 0;  // zero padding on every side
  int dilation = 1;
};

// weight: (out, in, k, k); bias: (out) or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry geometry);

Var pad_replicate(const Var& x, int top, int bottom, int left, int right);
Tensor pad_replicate(const Tensor& x, int top, int bottom, int left, int right);

// Top-left crop to (height, width).
Var crop(const Var& x, int64_t height, int64_t width);

// gamma, beta: (channels). Biased group variance.
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

// Per-channel y = scale * x + shift.
Var channel_affine(const Var& x, const Var& scale, const Var& shift);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
// Left-to-right sum of equally shaped tensors.
Var add_n(const std::vector<Var>& terms);
Var scale(const Var& x, double factor);

// x: (B,C,H,W) times gate (B,1,H,W) broadcast over channels.
Var mul_spatial_gate(const Var& x, const Var& gate);

// out[b] = sum_i mask[b,i] * weights[b,i] * terms[i][b]; weights (B,M), mask
// row-major (B*M) with entries in {0,1}. The mask carries no gradient.
Var weighted_sum(const std::vector<Var>& terms, const Var& weights, std::span<const uint8_t> mask);

// Bilinear resampling with half-pixel centers (align_corners = false).
Var resize_bilinear(const Var& x, int64_t height, int64_t width);

// Adaptive average pooling to bins x bins (bins clamped to the input size).
Var adaptive_avg_pool(const Var& x, int bins);

// (B,C,H,W) -> (B,C).
Var global_avg_pool(const Var& x);

// x: (B,in), weight (out,in), bias (out).
Var linear(const Var& x, const Var& weight, const Var& bias);

// Row-wise softmax of (B,M).
Var softmax(const Var& x);

Var concat_channels(const std::vector<Var>& parts);

// Sum of all entries of every term, as a (1) tensor.
Var sum_scalars(const std::vector<Var>& terms);

}  // namespace dfi::ops
