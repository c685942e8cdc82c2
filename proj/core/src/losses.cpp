#include "dfi/losses.hpp"

#include <cmath>
#include <vector>

#include "dfi/error.hpp"
#include "dfi/log.hpp"

namespace dfi {
namespace {

void check_same_size(std::span<const double> pred, std::span<const double> gt, const char* op) {
  if (pred.size() != gt.size()) {
    throw UsageError(std::string(op) + ": prediction has " + std::to_string(pred.size()) + " pixels, groundtruth " +
                     std::to_string(gt.size()));
  }
}

void check_binary(std::span<const double> gt, const char* op) {
  for (double y : gt)
    if (y != 0.0 && y != 1.0) throw UsageError(std::string(op) + ": groundtruth must be binary");
}

double clamp_pred(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }

// Weighted BCE with weights (w_pos, w_neg).
double weighted_bce(std::span<const double> pred, std::span<const double> gt, double eps, double w_pos, double w_neg) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = clamp_pred(pred[i], eps);
    if (gt[i] == 1.0) {
      acc += w_pos * std::log(p);
    } else {
      acc += w_neg * std::log(1.0 - p);
    }
  }
  return -acc;
}

void weighted_bce_grad(std::span<const double> pred, std::span<const double> gt, double eps, double w_pos,
                       double w_neg, std::span<double> grad) {
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    if (p < eps || p > 1.0 - eps) {
      grad[i] = 0.0;
    } else if (gt[i] == 1.0) {
      grad[i] = -w_pos / p;
    } else {
      grad[i] = w_neg / (1.0 - p);
    }
  }
}

void warn_if_degenerate(double beta) {
  if (beta == 0.0 || beta == 1.0) {
    log::warn("balanced BCE: groundtruth has a single class (beta = " + std::to_string(beta) +
              "); one loss term vanishes");
  }
}

std::vector<double> binarize(std::span<const double> gt, double threshold) {
  std::vector<double> out(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) out[i] = gt[i] >= threshold ? 1.0 : 0.0;
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1e-3)) throw ConfigError("loss.epsilon must be in (0, 1e-3)");
  if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0)) {
    throw ConfigError("loss.binarize_threshold must be in (0, 1)");
  }
}

double bce_standard(std::span<const double> pred, std::span<const double> gt, double epsilon) {
  check_same_size(pred, gt, "bce_standard");
  check_binary(gt, "bce_standard");
  return weighted_bce(pred, gt, epsilon, 1.0, 1.0);
}

double balanced_beta(std::span<const double> gt) {
  if (gt.empty()) throw UsageError("balanced_beta: empty groundtruth");
  std::size_t negatives = 0;
  for (double y : gt)
    if (y == 0.0) ++negatives;
  return static_cast<double>(negatives) / static_cast<double>(gt.size());
}

double bce_balanced(std::span<const double> pred, std::span<const double> gt, double epsilon) {
  check_same_size(pred, gt, "bce_balanced");
  check_binary(gt, "bce_balanced");
  const double beta = balanced_beta(gt);
  warn_if_degenerate(beta);
  return weighted_bce(pred, gt, epsilon, beta, 1.0 - beta);
}

void bce_standard_grad(std::span<const double> pred, std::span<const double> gt, double epsilon,
                       std::span<double> grad) {
  check_same_size(pred, gt, "bce_standard_grad");
  weighted_bce_grad(pred, gt, epsilon, 1.0, 1.0, grad);
}

void bce_balanced_grad(std::span<const double> pred, std::span<const double> gt, double epsilon,
                       std::span<double> grad) {
  check_same_size(pred, gt, "bce_balanced_grad");
  const double beta = balanced_beta(gt);
  weighted_bce_grad(pred, gt, epsilon, beta, 1.0 - beta, grad);
}

double task_loss(Task task, std::span<const double> pred, std::span<const double> gt, const LossConfig& config) {
  const std::vector<double> y = binarize(gt, config.binarize_threshold);
  switch (task) {
    case Task::Saliency: return bce_standard(pred, y, config.epsilon);
    case Task::Edge:
    case Task::Skeleton: return bce_balanced(pred, y, config.epsilon);
  }
  throw UsageError("task_loss: unknown task");
}

Var task_loss(Task task, const Var& pred, const Tensor& gt, const LossConfig& config) {
  if (pred.shape() != gt.shape()) {
    throw UsageError("task_loss: prediction " + shape_to_string(pred.shape()) + " vs groundtruth " +
                     shape_to_string(gt.shape()));
  }
  const int64_t batch = pred.dim(0);
  const int64_t per = pred.value().numel() / batch;
  auto targets = std::make_shared<std::vector<double>>(binarize(gt.values(), config.binarize_threshold));
  double total = 0.0;
  for (int64_t n = 0; n < batch; ++n) {
    std::span<const double> p(pred.value().data() + n * per, static_cast<std::size_t>(per));
    std::span<const double> y(targets->data() + n * per, static_cast<std::size_t>(per));
    total += task == Task::Saliency ? bce_standard(p, y, config.epsilon) : bce_balanced(p, y, config.epsilon);
  }
  const double eps = config.epsilon;
  return make_op_result(Tensor({1}, total), {pred}, [=](Node& self) {
    const auto& pn = self.inputs[0];
    double* g = pn->grad_buffer().data();
    std::vector<double> local(static_cast<std::size_t>(per));
    for (int64_t n = 0; n < batch; ++n) {
      std::span<const double> p(pn->value.data() + n * per, static_cast<std::size_t>(per));
      std::span<const double> y(targets->data() + n * per, static_cast<std::size_t>(per));
      if (task == Task::Saliency) {
        bce_standard_grad(p, y, eps, local);
      } else {
        bce_balanced_grad(p, y, eps, local);
      }
      for (int64_t i = 0; i < per; ++i) g[n * per + i] += self.grad[0] * local[static_cast<std::size_t>(i)];
    }
  });
}

double total_loss(const std::map<Task, double>& losses) {
  if (losses.empty()) throw UsageError("total_loss: no task losses");
  double acc = 0.0;
  for (const auto& [task, value] : losses) acc += value;
  return acc;
}

}  // namespace dfi
