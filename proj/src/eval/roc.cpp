#include <algorithm>
#include <cmath>
#include <numeric>

#include "smad/common/error.hpp"
#include "smad/eval/eval.hpp"

namespace smad::eval {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<synth::Label>& labels) {
  if (scores.size() != labels.size()) {
    throw Error("eval", ErrorCode::ShapeError,
                std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw Error("eval", ErrorCode::BadConfig, "non-finite anomaly score");
    if (labels[i] == synth::Label::Patient) ++pos;
  }
  if (pos == 0 || pos == scores.size()) {
    throw Error("eval", ErrorCode::SingleClassError, "ROC needs both healthy and patient scores");
  }
}

}  // namespace

RocCurve roc(const std::vector<double>& scores, const std::vector<synth::Label>& labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), synth::Label::Patient));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;

  RocCurve c;
  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      (labels[order[i]] == synth::Label::Patient ? tp : fp) += 1;
    }
    c.points.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos, s});
  }
  // Exact endpoint regardless of rounding in the divisions above.
  c.points.back().fpr = 1.0;
  c.points.back().tpr = 1.0;
  return c;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double mann_whitney(const std::vector<double>& scores, const std::vector<synth::Label>& labels) {
  check_inputs(scores, labels);
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (labels[p] != synth::Label::Patient) continue;
    for (std::size_t h = 0; h < scores.size(); ++h) {
      if (labels[h] != synth::Label::Healthy) continue;
      ++pairs;
      if (scores[p] > scores[h]) {
        wins += 1.0;
      } else if (scores[p] == scores[h]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

double tpr_at(const RocCurve& curve, double fpr) {
  const auto& pts = curve.points;
  if (pts.empty()) return 0.0;
  // Last point at or left of fpr; a vertical run ends on its highest TPR.
  std::size_t i = 0;
  while (i + 1 < pts.size() && pts[i + 1].fpr <= fpr) ++i;
  if (pts[i].fpr == fpr || i + 1 == pts.size()) return pts[i].tpr;
  const auto& a = pts[i];
  const auto& b = pts[i + 1];
  return a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr);
}

MeanRoc vertical_average(const std::vector<RocCurve>& curves, std::size_t grid) {
  if (grid < 2) throw Error("eval", ErrorCode::BadConfig, "ROC grid needs at least 2 points");
  MeanRoc m;
  if (curves.empty()) return m;
  const double n = static_cast<double>(curves.size());
  for (std::size_t g = 0; g < grid; ++g) {
    const double f = static_cast<double>(g) / static_cast<double>(grid - 1);
    double sum = 0.0, sq = 0.0;
    for (const auto& c : curves) {
      const double t = tpr_at(c, f);
      sum += t;
      sq += t * t;
    }
    const double mean = sum / n;
    m.fpr.push_back(f);
    m.tpr_mean.push_back(mean);
    m.tpr_std.push_back(std::sqrt(std::max(0.0, sq / n - mean * mean)));
  }
  return m;
}

}  // namespace smad::eval
