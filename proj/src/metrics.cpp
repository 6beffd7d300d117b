#include "burnscar/metrics.hpp"

#include <fmt/format.h>

#include "burnscar/error.hpp"

namespace burnscar {

ConfusionCounts accumulate(const std::vector<std::uint8_t>& prediction,
                           const std::vector<std::uint8_t>& truth) {
  if (prediction.size() != truth.size()) {
    throw ShapeError(fmt::format("prediction has {} pixels, truth has {}", prediction.size(),
                                 truth.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = prediction[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ConfusionCounts accumulate(const BinaryMask& prediction, const BinaryMask& truth) {
  if (prediction.height != truth.height || prediction.width != truth.width) {
    throw ShapeError(fmt::format("prediction is {}x{}, truth is {}x{}", prediction.height,
                                 prediction.width, truth.height, truth.width));
  }
  return accumulate(prediction.labels, truth.labels);
}

namespace {

double safe_ratio(double num, double den, bool& undefined) {
  undefined = den == 0.0;
  return undefined ? 0.0 : num / den;
}

}  // namespace

ClassMetrics class_metrics(const ConfusionCounts& c) {
  ClassMetrics m;
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn);
  m.precision = safe_ratio(tp, tp + fp, m.precision_undefined);
  m.recall = safe_ratio(tp, tp + fn, m.recall_undefined);
  m.f1 = safe_ratio(2.0 * m.precision * m.recall, m.precision + m.recall, m.f1_undefined);
  m.iou = safe_ratio(tp, tp + fp + fn, m.iou_undefined);
  return m;
}

MetricReport compute_metrics(const ConfusionCounts& burnt_counts) {
  MetricReport r;
  r.burnt = class_metrics(burnt_counts);
  r.unburnt = class_metrics(burnt_counts.complement());
  r.mean_f1 = 0.5 * (r.burnt.f1 + r.unburnt.f1);
  r.mean_iou = 0.5 * (r.burnt.iou + r.unburnt.iou);
  return r;
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "unburnt_precision", "unburnt_recall", "unburnt_f1", "unburnt_iou", "burnt_precision",
      "burnt_recall",      "burnt_f1",       "burnt_iou",  "mean_f1",     "mean_iou"};
  return cols;
}

std::vector<double> metric_values(const MetricReport& r) {
  return {r.unburnt.precision, r.unburnt.recall, r.unburnt.f1, r.unburnt.iou,
          r.burnt.precision,   r.burnt.recall,   r.burnt.f1,   r.burnt.iou,
          r.mean_f1,           r.mean_iou};
}

}  // namespace burnscar
