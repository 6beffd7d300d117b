#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "burnscar/metrics.hpp"
#include "burnscar/raster.hpp"
#include "burnscar/spectral.hpp"

namespace burnscar {

/// Evenly spaced candidate thresholds lo, ..., hi.
struct ThresholdGrid {
  double lo = 0.0;
  double hi = 1.0;
  int steps = 256;

  double at(int i) const noexcept {
    if (i == steps - 1) return hi;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  void validate() const;
};

/// Global threshold on a change field; pixels with value >= threshold are burnt.
struct ThresholdModel {
  IndexKind kind = IndexKind::NBR;
  double threshold = 0.0;
  ThresholdGrid grid;
  double train_f1 = 0.0;  ///< burnt-class F1 on the pooled training pixels at `threshold`

  std::string serialize() const;
  static ThresholdModel parse(const std::string& text);
};

/// 1 where value >= threshold, 0 otherwise (NaN maps to 0).
BinaryMask binarize(const ScalarField& field, double threshold);

/// Percentile with linear interpolation between order statistics; NaNs ignored.
double percentile(std::vector<float> values, double q);

/// Grid spanning the 1st..99th percentile of the finite values, widened to min..max
/// when that range collapses. Throws DataError if every finite value is identical.
ThresholdGrid percentile_grid(std::span<const float> values, int steps = 256);

/// Pixels pooled across samples: change value and truth label per pixel.
struct PooledPixels {
  std::vector<float> values;
  std::vector<std::uint8_t> labels;
};

PooledPixels pool_change_pixels(IndexKind kind, const std::vector<BitemporalSample>& samples);

struct GridSearchResult {
  int best_index = 0;
  double best_f1 = 0.0;
  std::vector<double> f1;  ///< burnt-class F1 per grid point
};

/// Burnt-class F1 at every grid point; argmax with ties to the smallest threshold.
GridSearchResult search_grid(const PooledPixels& pixels, const ThresholdGrid& grid);

/// Confusion counts of thresholding pooled pixels at t.
ConfusionCounts threshold_counts(const PooledPixels& pixels, double threshold);

/// Throws DataError when the training pixels hold a single class.
ThresholdModel fit_threshold(IndexKind kind, const std::vector<BitemporalSample>& train,
                             int steps = 256);

}  // namespace burnscar
