#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dfi/data.hpp"
#include "dfi/error.hpp"
#include "dfi/metrics.hpp"
#include "json.hpp"
#include "metric_oracles.hpp"

using namespace dfi;
using namespace dfi::testing;
namespace fs = std::filesystem;

namespace {

GrayMap from_rows(std::vector<std::vector<double>> rows) {
  GrayMap m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.at(y, x) = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
  return m;
}

GrayMap to_map(const BinaryMask& b) {
  GrayMap m(b.height, b.width);
  for (std::size_t i = 0; i < b.bits.size(); ++i) m.values[i] = b.bits[i];
  return m;
}

GrayMap blurred(const GrayMap& in) {
  GrayMap out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double acc = 0.0, z = 0.0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= in.height || xx >= in.width) continue;
          const double k = std::exp(-0.5 * (dy * dy + dx * dx));
          acc += k * in.at(yy, xx);
          z += k;
        }
      out.at(y, x) = acc / z;
    }
  return out;
}

}  // namespace

TEST_CASE("f score from precision and recall") {
  CHECK(f_score(0.8, 0.6, 0.3) == doctest::Approx(0.742857142857142857).epsilon(1e-14));
  CHECK(f_score(0.0, 0.0, 0.3) == 0.0);
  CHECK(f_score(1.0, 1.0, 1.0) == 1.0);
  MatchCounts empty;
  CHECK(precision_of(empty) == 1.0);
  CHECK(recall_of(empty) == 1.0);
  MatchCounts missed{0, 0, 3};
  CHECK(precision_of(missed) == 0.0);
  CHECK(recall_of(missed) == 0.0);
}

TEST_CASE("mae examples") {
  CHECK(mae(from_rows({{0.2, 0.4}}), from_rows({{0.0, 1.0}})) == doctest::Approx(0.4));
  const GrayMap gt = from_rows({{0, 1, 1}, {1, 0, 0}});
  GrayMap complement = gt;
  for (double& v : complement.values) v = 1.0 - v;
  CHECK(mae(complement, gt) == 1.0);
  CHECK(mae(gt, gt) == 0.0);
}

TEST_CASE("f_measure and mae match brute force over all 3x3 binary maps") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GrayMap pred(3, 3);
  for (double& v : pred.values) v = std::round(u(rng) * 255.0) / 255.0;
  const std::vector<double> thresholds = saliency_thresholds();
  for (int bits = 0; bits < 512; ++bits) {
    GrayMap gt(3, 3);
    for (int i = 0; i < 9; ++i) gt.values[static_cast<std::size_t>(i)] = (bits >> i) & 1;
    for (std::size_t k = 0; k < thresholds.size(); k += 17)
      REQUIRE(f_measure(pred, gt, thresholds[k]) == brute_f(pred, gt, thresholds[k], kSaliencyBeta2));
    REQUIRE(mae(pred, gt) == brute_mae(pred, gt));
  }
}

TEST_CASE("saliency thresholds and curve") {
  const auto t = saliency_thresholds();
  CHECK(t.size() == 255);
  CHECK(t.front() == 1.0);
  CHECK(t.back() == 1.0 / 255.0);
  const GrayMap gt = from_rows({{0, 1}, {1, 0}});
  const SaliencyCurve c = saliency_curve({gt}, {gt});
  CHECK(c.max_f == 1.0);
  CHECK_THROWS_AS(saliency_curve({}, {}), UsageError);
  CHECK_THROWS_AS(pixel_counts(gt, from_rows({{0.5, 1}, {1, 0}}), 0.5), UsageError);
}

TEST_CASE("s-measure matches the reference implementation") {
  for (const SmeasureFixture& f : smeasure_fixtures()) {
    GrayMap pred, gt;
    smeasure_case(f.k, f.h, f.w, pred, gt);
    CHECK(s_measure(pred, gt) == doctest::Approx(f.expected).epsilon(1e-12));
  }
  GrayMap gt(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) gt.at(y, x) = 1.0;
  CHECK(s_measure(GrayMap(8, 8, 0.5), gt) == doctest::Approx(0.5875).epsilon(1e-12));
}

TEST_CASE("s-measure special cases") {
  const GrayMap gt = from_rows({{0, 1, 1}, {0, 1, 0}, {0, 0, 0}});
  CHECK(s_measure(gt, gt) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s_measure(GrayMap(3, 3, 0.25), GrayMap(3, 3, 0.0)) == doctest::Approx(0.75));
  CHECK(s_measure(GrayMap(3, 3, 0.25), GrayMap(3, 3, 1.0)) == doctest::Approx(0.25));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    GrayMap p(7, 9);
    for (double& v : p.values) v = u(rng);
    const GrayMap g = random_binary(rng, 7, 9, 0.4);
    const double s = s_measure(p, g);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("nms keeps one-pixel binary lines") {
  GrayMap hline(15, 15), vline(15, 15), diag(15, 15);
  for (int i = 0; i < 15; ++i) {
    hline.at(7, i) = 1.0;
    vline.at(i, 4) = 1.0;
    diag.at(i, i) = 1.0;
  }
  for (const GrayMap* m : {&hline, &vline, &diag}) CHECK(nms_thin(*m).values == m->values);
  const GrayMap zero(10, 12);
  CHECK(nms_thin(zero).values == zero.values);
}

TEST_CASE("nms reduces a soft band to its centerline") {
  GrayMap band(16, 20);
  for (int x = 0; x < 20; ++x) {
    band.at(7, x) = 0.5;
    band.at(8, x) = 1.0;
    band.at(9, x) = 0.5;
  }
  const GrayMap thin = nms_thin(band);
  for (int x = 0; x < 20; ++x) {
    CHECK(thin.at(8, x) == 1.0);
    CHECK(thin.at(7, x) == 0.0);
    CHECK(thin.at(9, x) == 0.0);
  }
}

TEST_CASE("thinned blurred edges keep their peaks and lose most ridge mass") {
  SyntheticSpec spec;
  spec.canvas = 48;
  for (uint64_t i = 0; i < 5; ++i) {
    const SyntheticScene s = generate_scene(spec, i);
    const GrayMap soft = blurred(to_map(s.edge));
    const GrayMap thin = nms_thin(soft);
    int kept = 0, support = 0;
    for (std::size_t k = 0; k < soft.size(); ++k) {
      support += soft.values[k] > 0.05;
      kept += thin.values[k] > 0.05;
      CHECK((thin.values[k] == 0.0 || thin.values[k] == soft.values[k]));
    }
    CHECK(kept > 0);
    CHECK(kept < support / 2);
  }
}

TEST_CASE("correspond basics") {
  const GrayMap a = from_rows({{0, 1, 0, 0}, {0, 1, 0, 0}, {0, 1, 0, 0}, {0, 1, 0, 0}});
  const GrayMap shifted = from_rows({{0, 0, 1, 0}, {0, 0, 1, 0}, {0, 0, 1, 0}, {0, 0, 1, 0}});
  const MatchCounts same = correspond(a, a, MatchTolerance{});
  CHECK(same.tp == 4);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  const MatchCounts exact = correspond(a, shifted, MatchTolerance{0.0});
  CHECK(exact.tp == 0);
  CHECK(exact.fp == 4);
  CHECK(exact.fn == 4);
  // Radius 0.2 * sqrt(32) > 1 reaches the neighbouring column.
  const MatchCounts tolerant = correspond(a, shifted, MatchTolerance{0.2});
  CHECK(tolerant.tp == 4);
  CHECK(correspond(a, GrayMap(4, 4), MatchTolerance{}).fp == 4);
}

TEST_CASE("greedy matching never beats the optimum and matches it at the default tolerance") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> size(4, 12);
  std::uniform_real_distribution<double> density(0.05, 0.4);
  for (double delta : {0.0075, 0.1, 0.2}) {
    for (int trial = 0; trial < 100; ++trial) {
      const int h = size(rng), w = size(rng);
      const GrayMap p = random_binary(rng, h, w, density(rng));
      const GrayMap g = random_binary(rng, h, w, density(rng));
      const MatchTolerance tol{delta};
      const int64_t greedy = correspond(p, g, tol).tp;
      const int64_t best = optimal_tp(p, g, tol.radius(h, w));
      CHECK(greedy <= best);
      // A maximal matching holds at least half of the maximum one.
      CHECK(2 * greedy >= best);
      if (delta == 0.0075) CHECK(greedy == best);
    }
  }
}

TEST_CASE("boundary thresholds") {
  const auto t = boundary_thresholds();
  CHECK(t.size() == 99);
  CHECK(t.front() == doctest::Approx(0.99));
  CHECK(t.back() == doctest::Approx(0.01));
}

TEST_CASE("ods with exact matching equals the pixel reference") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GrayMap> preds, gts;
  for (int i = 0; i < 4; ++i) {
    GrayMap p(10, 11);
    for (double& v : p.values) v = u(rng) < 0.6 ? 0.0 : u(rng);
    preds.push_back(p);
    gts.push_back(random_binary(rng, 10, 11, 0.2));
  }
  const BoundaryScores b = ods_ois(preds, gts, MatchTolerance{0.0});
  CHECK(b.ods == doctest::Approx(exact_ods(preds, gts, boundary_thresholds())).epsilon(1e-14));
  CHECK(b.f_curve.size() == 99);
  CHECK(b.ods == *std::max_element(b.f_curve.begin(), b.f_curve.end()));
}

TEST_CASE("single image ois equals ods") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    GrayMap p(12, 12);
    for (double& v : p.values) v = u(rng) < 0.7 ? 0.0 : u(rng);
    const GrayMap g = random_binary(rng, 12, 12, 0.15);
    const BoundaryScores b = ods_ois({p}, {g}, MatchTolerance{0.1});
    CHECK(b.ois == doctest::Approx(b.ods).epsilon(1e-14));
  }
}

TEST_CASE("perfect and empty predictions") {
  SyntheticSpec spec;
  const SyntheticSet set = generate_synthetic(spec, 3);
  std::vector<GrayMap> sal, edge, sk;
  for (std::size_t i = 0; i < 3; ++i) {
    sal.push_back(GrayMap::from_tensor(set.saliency.get(i).gt));
    edge.push_back(GrayMap::from_tensor(set.edge.get(i).gt));
    sk.push_back(GrayMap::from_tensor(set.skeleton.get(i).gt));
  }
  const MetricReport rs = evaluate_predictions(sal, sal, Task::Saliency, "synthetic");
  CHECK(rs.values.at("F_beta") == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rs.values.at("S_m") == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rs.values.at("MAE") == doctest::Approx(0.0));
  const MetricReport re = evaluate_predictions(edge, edge, Task::Edge, "synthetic");
  CHECK(re.values.at("ODS") == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(re.values.at("OIS") == doctest::Approx(1.0).epsilon(1e-6));
  const MetricReport rk = evaluate_predictions(sk, sk, Task::Skeleton, "synthetic");
  CHECK(rk.values.at("F_m") == doctest::Approx(1.0).epsilon(1e-6));
  std::vector<GrayMap> empty(3, GrayMap(sk[0].height, sk[0].width));
  CHECK(evaluate_predictions(empty, sk, Task::Skeleton, "synthetic").values.at("F_m") == 0.0);
}

TEST_CASE("skeleton F_m is the maximum of its curve") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GrayMap> preds, gts;
  for (int i = 0; i < 3; ++i) {
    GrayMap p(9, 9);
    for (double& v : p.values) v = u(rng) < 0.5 ? 0.0 : u(rng);
    preds.push_back(p);
    gts.push_back(random_binary(rng, 9, 9, 0.2));
  }
  const SkeletonScores s = skeleton_fm(preds, gts, MatchTolerance{0.1});
  double best = 0.0;
  for (std::size_t k = 0; k < s.curve.precision.size(); ++k)
    best = std::max(best, f_score(s.curve.precision[k], s.curve.recall[k], 1.0));
  CHECK(s.fm == doctest::Approx(best).epsilon(1e-14));
}

TEST_CASE("reports carry the task metric names") {
  const GrayMap g = from_rows({{0, 1}, {1, 0}});
  CHECK(evaluate_predictions({g}, {g}, Task::Saliency, "d").values.size() == 3);
  const MetricReport e = evaluate_predictions({g}, {g}, Task::Edge, "d");
  CHECK(e.values.count("ODS") == 1);
  CHECK(e.values.count("OIS") == 1);
  CHECK(evaluate_predictions({g}, {g}, Task::Skeleton, "d").values.count("F_m") == 1);

  const fs::path dir = fs::temp_directory_path() / "dfi_test_metrics";
  fs::remove_all(dir);
  write_report_csv(dir / "m.csv", {e});
  write_report_json(dir / "m.json", {e});
  write_pr_csv(dir / "pr.csv", e.curve);
  std::ifstream csv(dir / "m.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "dataset,task,metric,value");
  const nlohmann::json j = nlohmann::json::parse(std::ifstream(dir / "m.json"));
  CHECK(j.at(0).at("task") == "edge");
  CHECK(j.at(0).at("metrics").at("ODS").get<double>() == doctest::Approx(1.0));
  std::ifstream pr(dir / "pr.csv");
  int lines = 0;
  for (std::string line; std::getline(pr, line);) ++lines;
  CHECK(lines == 100);
}
