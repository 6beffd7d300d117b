#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "burnscar/raster.hpp"

namespace burnscar {

/// Pixel confusion counts for the burnt (positive) class. Unburnt-class counts are the
/// same four numbers with roles swapped: tp<->tn, fp<->fn.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts complement() const noexcept { return {tn, fn, fp, tp}; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) noexcept {
    return a += b;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Counts over equally shaped prediction/truth masks; throws ShapeError otherwise.
ConfusionCounts accumulate(const BinaryMask& prediction, const BinaryMask& truth);
ConfusionCounts accumulate(const std::vector<std::uint8_t>& prediction,
                           const std::vector<std::uint8_t>& truth);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  /// Set when a denominator was zero and the metric was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  bool iou_undefined = false;
};

ClassMetrics class_metrics(const ConfusionCounts& counts);

struct MetricReport {
  ClassMetrics unburnt;
  ClassMetrics burnt;
  double mean_f1 = 0.0;
  double mean_iou = 0.0;
};

MetricReport compute_metrics(const ConfusionCounts& burnt_counts);

/// Names of the ten report columns, unburnt first, then burnt, then means.
const std::vector<std::string>& metric_columns();
/// Values in metric_columns() order, as fractions in [0, 1].
std::vector<double> metric_values(const MetricReport& report);

}  // namespace burnscar
