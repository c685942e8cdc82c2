#include "dfi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "dfi/error.hpp"
#include "json.hpp"

namespace dfi {

GrayMap GrayMap::from_tensor(const Tensor& t) {
  if (t.rank() < 2) throw UsageError("GrayMap needs at least two axes, got " + shape_to_string(t.shape()));
  const auto h = static_cast<int>(t.dim(t.rank() - 2));
  const auto w = static_cast<int>(t.dim(t.rank() - 1));
  if (t.numel() != static_cast<int64_t>(h) * w) {
    throw UsageError("GrayMap expects a single map, got " + shape_to_string(t.shape()));
  }
  GrayMap m(h, w);
  std::copy(t.values().begin(), t.values().end(), m.values.begin());
  return m;
}

GrayMap GrayMap::binarized(double threshold) const {
  GrayMap m(height, width);
  for (std::size_t i = 0; i < values.size(); ++i) m.values[i] = values[i] >= threshold ? 1.0 : 0.0;
  return m;
}

double precision_of(const MatchCounts& c) {
  if (c.tp + c.fp == 0) return c.tp + c.fn == 0 ? 1.0 : 0.0;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall_of(const MatchCounts& c) {
  if (c.tp + c.fn == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double f_score(double precision, double recall, double beta2) {
  if (precision + recall <= 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
}

double f_score(const MatchCounts& c, double beta2) { return f_score(precision_of(c), recall_of(c), beta2); }

namespace {

void require_same_size(const GrayMap& a, const GrayMap& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw UsageError(std::string(op) + ": maps differ in size (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

void require_binary(const GrayMap& gt, const char* op) {
  for (double v : gt.values)
    if (v != 0.0 && v != 1.0) throw UsageError(std::string(op) + ": groundtruth must be binary");
}

}  // namespace

MatchCounts pixel_counts(const GrayMap& pred, const GrayMap& gt, double threshold) {
  require_same_size(pred, gt, "pixel_counts");
  require_binary(gt, "pixel_counts");
  MatchCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.values[i] >= threshold;
    const bool g = gt.values[i] == 1.0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
  }
  return c;
}

double f_measure(const GrayMap& pred, const GrayMap& gt, double threshold, double beta2) {
  return f_score(pixel_counts(pred, gt, threshold), beta2);
}

std::vector<double> saliency_thresholds(int steps) {
  std::vector<double> t;
  for (int k = steps; k >= 1; --k) t.push_back(static_cast<double>(k) / steps);
  return t;
}

SaliencyCurve saliency_curve(const std::vector<GrayMap>& preds, const std::vector<GrayMap>& gts, int steps,
                             double beta2) {
  if (preds.empty() || preds.size() != gts.size()) throw UsageError("saliency_curve: need equal, non-empty lists");
  SaliencyCurve out;
  out.curve.thresholds = saliency_thresholds(steps);
  const std::size_t nt = out.curve.thresholds.size();
  out.curve.precision.assign(nt, 0.0);
  out.curve.recall.assign(nt, 0.0);
  out.f_mean.assign(nt, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t k = 0; k < nt; ++k) {
      const MatchCounts c = pixel_counts(preds[i], gts[i], out.curve.thresholds[k]);
      out.curve.precision[k] += precision_of(c);
      out.curve.recall[k] += recall_of(c);
      out.f_mean[k] += f_score(c, beta2);
    }
  }
  const double n = static_cast<double>(preds.size());
  for (std::size_t k = 0; k < nt; ++k) {
    out.curve.precision[k] /= n;
    out.curve.recall[k] /= n;
    out.f_mean[k] /= n;
    out.max_f = std::max(out.max_f, out.f_mean[k]);
  }
  return out;
}

double mae(const GrayMap& pred, const GrayMap& gt) {
  require_same_size(pred, gt, "mae");
  if (pred.size() == 0) throw UsageError("mae: empty maps");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.values[i] - gt.values[i]);
  return acc / static_cast<double>(pred.size());
}

// ---- S-measure ----

namespace {

constexpr double kMatlabEps = std::numeric_limits<double>::epsilon();

double object_score(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  // Sample standard deviation (N - 1).
  const double sigma = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sigma + kMatlabEps);
}

double s_object(const GrayMap& pred, const GrayMap& gt) {
  std::vector<double> fg, bg;
  double u = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt.values[i] == 1.0) {
      fg.push_back(pred.values[i]);
      u += 1.0;
    } else {
      bg.push_back(1.0 - pred.values[i]);
    }
  }
  u /= static_cast<double>(pred.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

// SSIM-style similarity over the rectangle [y0,y1) x [x0,x1).
double region_ssim(const GrayMap& pred, const GrayMap& gt, int y0, int y1, int x0, int x1) {
  const double n = static_cast<double>((y1 - y0) * (x1 - x0));
  if (n <= 0.0) return 0.0;
  double mx = 0.0, my = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      mx += pred.at(y, x);
      my += gt.at(y, x);
    }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double dx = pred.at(y, x) - mx, dy = gt.at(y, x) - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  sxx /= (n - 1.0 + kMatlabEps);
  syy /= (n - 1.0 + kMatlabEps);
  sxy /= (n - 1.0 + kMatlabEps);
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0.0) return alpha / (beta + kMatlabEps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

double s_region(const GrayMap& pred, const GrayMap& gt) {
  const int h = gt.height, w = gt.width;
  double total = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = gt.at(y, x);
      total += g;
      sx += g * (x + 1);
      sy += g * (y + 1);
    }
  // Centroid in 1-based pixel units gives the column/row count of the left/top part.
  int cx, cy;
  if (total == 0.0) {
    cx = static_cast<int>(std::lround(w / 2.0));
    cy = static_cast<int>(std::lround(h / 2.0));
  } else {
    cx = static_cast<int>(std::lround(sx / total));
    cy = static_cast<int>(std::lround(sy / total));
  }
  const double area = static_cast<double>(w) * h;
  const double w1 = static_cast<double>(cx) * cy / area;
  const double w2 = static_cast<double>(w - cx) * cy / area;
  const double w3 = static_cast<double>(cx) * (h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * region_ssim(pred, gt, 0, cy, 0, cx) + w2 * region_ssim(pred, gt, 0, cy, cx, w) +
         w3 * region_ssim(pred, gt, cy, h, 0, cx) + w4 * region_ssim(pred, gt, cy, h, cx, w);
}

}  // namespace

double s_measure(const GrayMap& pred, const GrayMap& gt) {
  require_same_size(pred, gt, "s_measure");
  require_binary(gt, "s_measure");
  if (pred.size() == 0) throw UsageError("s_measure: empty maps");
  const double y = std::accumulate(gt.values.begin(), gt.values.end(), 0.0) / static_cast<double>(gt.size());
  const double x = std::accumulate(pred.values.begin(), pred.values.end(), 0.0) / static_cast<double>(pred.size());
  if (y == 0.0) return 1.0 - x;
  if (y == 1.0) return x;
  const double q = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt);
  return std::max(0.0, q);
}

// ---- NMS thinning ----

namespace {

GrayMap gaussian_blur(const GrayMap& in, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double z = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    z += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= z;
  GrayMap tmp(in.height, in.width), out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * in.at(y, std::clamp(x + i, 0, in.width - 1));
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(std::clamp(y + i, 0, in.height - 1), x);
      out.at(y, x) = acc;
    }
  return out;
}

double interp(const GrayMap& m, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(m.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(m.width - 1));
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, m.height - 1), x1 = std::min(x0 + 1, m.width - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * m.at(y0, x0) + fx * m.at(y0, x1)) + fy * ((1 - fx) * m.at(y1, x0) + fx * m.at(y1, x1));
}

}  // namespace

GrayMap nms_thin(const GrayMap& map) {
  const int h = map.height, w = map.width;
  GrayMap out(h, w);
  if (h == 0 || w == 0) return out;
  const GrayMap smooth = gaussian_blur(map, 1.0);
  GrayMap jxx(h, w), jxy(h, w), jyy(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (smooth.at(y, std::min(x + 1, w - 1)) - smooth.at(y, std::max(x - 1, 0)));
      const double gy = 0.5 * (smooth.at(std::min(y + 1, h - 1), x) - smooth.at(std::max(y - 1, 0), x));
      jxx.at(y, x) = gx * gx;
      jxy.at(y, x) = gx * gy;
      jyy.at(y, x) = gy * gy;
    }
  jxx = gaussian_blur(jxx, 1.0);
  jxy = gaussian_blur(jxy, 1.0);
  jyy = gaussian_blur(jyy, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = map.at(y, x);
      if (v <= 0.0) continue;
      // Dominant gradient orientation = the ridge normal.
      const double theta = 0.5 * std::atan2(2.0 * jxy.at(y, x), jxx.at(y, x) - jyy.at(y, x));
      const double nx = std::cos(theta), ny = std::sin(theta);
      const double ahead = interp(map, y + ny, x + nx);
      const double behind = interp(map, y - ny, x - nx);
      if (v >= ahead && v >= behind) out.at(y, x) = v;
    }
  return out;
}

// ---- tolerant matching ----

double MatchTolerance::radius(int height, int width) const {
  return delta * std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width);
}

MatchCounts correspond(const GrayMap& pred, const GrayMap& gt, const MatchTolerance& tolerance) {
  require_same_size(pred, gt, "correspond");
  const int h = pred.height, w = pred.width;
  const double r = tolerance.radius(h, w);
  const int reach = static_cast<int>(std::floor(r));
  const double r2 = r * r;

  std::vector<int> pred_index(pred.size(), -1), gt_index(gt.size(), -1);
  int np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred.values[i] != 0.0) pred_index[i] = np++;
    if (gt.values[i] != 0.0) gt_index[i] = ng++;
  }
  struct Pair {
    int d2, p, g;
  };
  std::vector<Pair> pairs;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = pred_index[static_cast<std::size_t>(y * w + x)];
      if (p < 0) continue;
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
          const int d2 = dy * dy + dx * dx;
          if (d2 > r2) continue;
          const int g = gt_index[static_cast<std::size_t>(yy * w + xx)];
          if (g >= 0) pairs.push_back({d2, p, g});
        }
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.p != b.p) return a.p < b.p;
    return a.g < b.g;
  });
  std::vector<uint8_t> used_p(static_cast<std::size_t>(np), 0), used_g(static_cast<std::size_t>(ng), 0);
  MatchCounts c;
  for (const Pair& pr : pairs) {
    if (used_p[static_cast<std::size_t>(pr.p)] || used_g[static_cast<std::size_t>(pr.g)]) continue;
    used_p[static_cast<std::size_t>(pr.p)] = used_g[static_cast<std::size_t>(pr.g)] = 1;
    ++c.tp;
  }
  c.fp = np - c.tp;
  c.fn = ng - c.tp;
  return c;
}

std::vector<double> boundary_thresholds(int steps) {
  std::vector<double> t;
  for (int k = steps; k >= 1; --k) t.push_back(static_cast<double>(k) / (steps + 1));
  return t;
}

namespace {

// counts[image][threshold]
std::vector<std::vector<MatchCounts>> threshold_counts(const std::vector<GrayMap>& preds,
                                                       const std::vector<GrayMap>& gts,
                                                       const MatchTolerance& tolerance,
                                                       const std::vector<double>& thresholds) {
  if (preds.empty() || preds.size() != gts.size()) throw UsageError("boundary metrics need equal, non-empty lists");
  std::vector<std::vector<MatchCounts>> counts(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require_same_size(preds[i], gts[i], "boundary metrics");
    const GrayMap gt = gts[i].binarized(0.5);
    for (double t : thresholds) {
      GrayMap bin(preds[i].height, preds[i].width);
      for (std::size_t j = 0; j < bin.size(); ++j) bin.values[j] = preds[i].values[j] >= t ? 1.0 : 0.0;
      counts[i].push_back(correspond(bin, gt, tolerance));
    }
  }
  return counts;
}

}  // namespace

BoundaryScores ods_ois(const std::vector<GrayMap>& preds, const std::vector<GrayMap>& gts,
                       const MatchTolerance& tolerance, int steps, double beta2) {
  BoundaryScores out;
  const std::vector<double> thresholds = boundary_thresholds(steps);
  const auto counts = threshold_counts(preds, gts, tolerance, thresholds);
  out.curve.thresholds = thresholds;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    MatchCounts agg;
    for (const auto& per_image : counts) agg += per_image[k];
    const double f = f_score(agg, beta2);
    out.curve.precision.push_back(precision_of(agg));
    out.curve.recall.push_back(recall_of(agg));
    out.f_curve.push_back(f);
    if (k == 0 || f > out.ods) {
      out.ods = f;
      out.ods_threshold = thresholds[k];
    }
  }
  MatchCounts best_sum;
  for (const auto& per_image : counts) {
    std::size_t best = 0;
    double best_f = -1.0;
    for (std::size_t k = 0; k < per_image.size(); ++k) {
      const double f = f_score(per_image[k], beta2);
      if (f > best_f) {
        best_f = f;
        best = k;
      }
    }
    best_sum += per_image[best];
  }
  out.ois = f_score(best_sum, beta2);
  return out;
}

SkeletonScores skeleton_fm(const std::vector<GrayMap>& preds, const std::vector<GrayMap>& gts,
                           const MatchTolerance& tolerance, int steps) {
  const BoundaryScores b = ods_ois(preds, gts, tolerance, steps, kBoundaryBeta2);
  return {b.ods, b.ods_threshold, b.curve};
}

// ---- reporting ----

MetricReport evaluate_predictions(const std::vector<GrayMap>& preds, const std::vector<GrayMap>& gts, Task task,
                                  const std::string& dataset, const MetricSettings& settings) {
  if (preds.empty() || preds.size() != gts.size()) throw UsageError("evaluate_predictions: need equal, non-empty lists");
  MetricReport report;
  report.dataset = dataset;
  report.task = task;
  std::vector<GrayMap> binary_gts;
  for (const GrayMap& g : gts) binary_gts.push_back(g.binarized(0.5));
  if (task == Task::Saliency) {
    const SaliencyCurve curve = saliency_curve(preds, binary_gts, settings.saliency_steps);
    double mae_sum = 0.0, s_sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      mae_sum += mae(preds[i], binary_gts[i]);
      s_sum += s_measure(preds[i], binary_gts[i]);
    }
    const double n = static_cast<double>(preds.size());
    report.values["F_beta"] = curve.max_f;
    report.values["MAE"] = mae_sum / n;
    report.values["S_m"] = s_sum / n;
    report.curve = curve.curve;
    return report;
  }
  std::vector<GrayMap> thinned;
  for (const GrayMap& p : preds) thinned.push_back(settings.thin_predictions ? nms_thin(p) : p);
  if (task == Task::Edge) {
    const BoundaryScores b = ods_ois(thinned, binary_gts, settings.tolerance, settings.boundary_steps);
    report.values["ODS"] = b.ods;
    report.values["OIS"] = b.ois;
    report.curve = b.curve;
  } else {
    const SkeletonScores s = skeleton_fm(thinned, binary_gts, settings.tolerance, settings.boundary_steps);
    report.values["F_m"] = s.fm;
    report.curve = s.curve;
  }
  return report;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream out = open_for_write(path);
  out << "dataset,task,metric,value\n";
  for (const MetricReport& r : reports)
    for (const auto& [metric, value] : r.values)
      out << r.dataset << ',' << task_name(r.task) << ',' << metric << ',' << value << '\n';
}

void write_report_json(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const MetricReport& r : reports)
    out.push_back({{"dataset", r.dataset}, {"task", task_name(r.task)}, {"metrics", r.values}});
  std::ofstream file = open_for_write(path);
  file << out.dump(2) << '\n';
}

void write_pr_csv(const std::filesystem::path& path, const PrCurve& curve) {
  std::ofstream out = open_for_write(path);
  out << "threshold,precision,recall\n";
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k)
    out << curve.thresholds[k] << ',' << curve.precision[k] << ',' << curve.recall[k] << '\n';
}

}  // namespace dfi
