#pragma once

#include <map>
#include <span>

#include "dfi/autograd.hpp"
#include "dfi/task.hpp"

namespace dfi {

struct LossConfig {
  double epsilon = 1e-7;            // predictions are clamped to [eps, 1 - eps]
  double binarize_threshold = 0.5;  // soft groundtruth >= threshold counts as positive

  void validate() const;
};

// Sum-reduced binary cross-entropy over pixels. `gt` must be exactly 0 or 1.
double bce_standard(std::span<const double> pred, std::span<const double> gt, double epsilon = 1e-7);

// beta = |Y-| / |Y+ + Y-|; positives weighted by beta, negatives by 1 - beta.
double balanced_beta(std::span<const double> gt);
double bce_balanced(std::span<const double> pred, std::span<const double> gt, double epsilon = 1e-7);

// d loss / d pred, written into `grad`. Zero where the clamp is active.
void bce_standard_grad(std::span<const double> pred, std::span<const double> gt, double epsilon,
                       std::span<double> grad);
void bce_balanced_grad(std::span<const double> pred, std::span<const double> gt, double epsilon,
                       std::span<double> grad);

// Saliency uses the standard loss; edge and skeleton the balanced one. `gt` is
// binarized first.
double task_loss(Task task, std::span<const double> pred, std::span<const double> gt, const LossConfig& config = {});

// Differentiable form. pred: (batch, 1, H, W) probabilities; gt same shape.
// The loss of each sample is computed separately (own beta) and summed.
Var task_loss(Task task, const Var& pred, const Tensor& gt, const LossConfig& config = {});

// Plain sum of per-task losses, accumulated in canonical task order.
double total_loss(const std::map<Task, double>& losses);

}  // namespace dfi
