#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dfi/task.hpp"
#include "dfi/tensor.hpp"

namespace dfi {

// Single-channel map, row-major.
struct GrayMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  GrayMap() = default;
  GrayMap(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}
  double at(int y, int x) const { return values[static_cast<std::size_t>(y * width + x)]; }
  double& at(int y, int x) { return values[static_cast<std::size_t>(y * width + x)]; }
  std::size_t size() const { return values.size(); }

  // Last two axes of a (…, H, W) tensor holding a single map.
  static GrayMap from_tensor(const Tensor& t);
  GrayMap binarized(double threshold) const;
};

inline constexpr double kSaliencyBeta2 = 0.3;
inline constexpr double kBoundaryBeta2 = 1.0;

struct MatchCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

// P = 1 when nothing is predicted and the groundtruth is empty, otherwise
// TP/(TP+FP) with 0 for no predictions; R = 1 for empty groundtruth.
double precision_of(const MatchCounts& c);
double recall_of(const MatchCounts& c);
// (1 + b2) P R / (b2 P + R); 0 when P + R = 0.
double f_score(double precision, double recall, double beta2);
double f_score(const MatchCounts& c, double beta2);

struct PrCurve {
  std::vector<double> thresholds;  // descending
  std::vector<double> precision;
  std::vector<double> recall;
};

// ---- saliency ----

// Binarizes pred at `threshold` (pred >= threshold is positive). gt must be
// binary; UsageError otherwise.
MatchCounts pixel_counts(const GrayMap& pred, const GrayMap& gt, double threshold);
double f_measure(const GrayMap& pred, const GrayMap& gt, double threshold, double beta2 = kSaliencyBeta2);

// k/steps for k = steps..1 (descending).
std::vector<double> saliency_thresholds(int steps = 255);

struct SaliencyCurve {
  PrCurve curve;              // precision/recall averaged over images
  std::vector<double> f_mean;  // mean F per threshold
  double max_f = 0.0;
};
SaliencyCurve saliency_curve(const std::vector<GrayMap>& preds, const std::vector<GrayMap>& gts, int steps = 255,
                             double beta2 = kSaliencyBeta2);

double mae(const GrayMap& pred, const GrayMap& gt);

// Structure measure: 0.5 * object-aware + 0.5 * region-aware similarity.
double s_measure(const GrayMap& pred, const GrayMap& gt);

// ---- edge / skeleton ----

// Orientation-based non-maximum suppression. Orientation comes from the
// structure tensor of the gradient of a sigma = 1 Gaussian-smoothed copy.
GrayMap nms_thin(const GrayMap& map);

struct MatchTolerance {
  double delta = 0.0075;  // fraction of the image diagonal; 0 is exact matching
  double radius(int height, int width) const;
};

// Greedy one-to-one matching of nonzero pixels within the tolerance radius,
// closest pairs first.
MatchCounts correspond(const GrayMap& pred, const GrayMap& gt, const MatchTolerance& tolerance);

// k/(steps+1) for k = steps..1 (descending); 99 steps gives 0.99 .. 0.01.
std::vector<double> boundary_thresholds(int steps = 99);

struct BoundaryScores {
  double ods = 0.0;
  double ods_threshold = 0.0;
  double ois = 0.0;
  PrCurve curve;
  std::vector<double> f_curve;  // dataset F per threshold
};

// preds must already be thinned; gts are binarized at 0.5.
BoundaryScores ods_ois(const std::vector<GrayMap>& preds, const std::vector<GrayMap>& gts,
                       const MatchTolerance& tolerance, int steps = 99, double beta2 = kBoundaryBeta2);

struct SkeletonScores {
  double fm = 0.0;
  double threshold = 0.0;
  PrCurve curve;
};
SkeletonScores skeleton_fm(const std::vector<GrayMap>& preds, const std::vector<GrayMap>& gts,
                           const MatchTolerance& tolerance, int steps = 99);

// ---- reporting ----

struct MetricSettings {
  MatchTolerance tolerance;
  int saliency_steps = 255;
  int boundary_steps = 99;
  bool thin_predictions = true;  // apply nms_thin to edge/skeleton maps
};

struct MetricReport {
  std::string dataset;
  Task task = Task::Saliency;
  std::map<std::string, double> values;  // F_beta, MAE, S_m | ODS, OIS | F_m
  PrCurve curve;
};

MetricReport evaluate_predictions(const std::vector<GrayMap>& preds, const std::vector<GrayMap>& gts, Task task,
                                  const std::string& dataset, const MetricSettings& settings = {});

// Rows: dataset,task,metric,value.
void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports);
void write_report_json(const std::filesystem::path& path, const std::vector<MetricReport>& reports);
// Rows: threshold,precision,recall.
void write_pr_csv(const std::filesystem::path& path, const PrCurve& curve);

}  // namespace dfi
