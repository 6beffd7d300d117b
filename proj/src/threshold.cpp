#include "burnscar/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "burnscar/error.hpp"

namespace burnscar {

void ThresholdGrid::validate() const {
  if (!(lo < hi)) throw ConfigError(fmt::format("threshold grid needs lo < hi, got [{}, {}]", lo, hi));
  if (steps < 2) throw ConfigError("threshold grid needs at least 2 steps");
}

std::string ThresholdModel::serialize() const {
  return fmt::format(
      "kind={}\nthreshold={:.17g}\ngrid_lo={:.17g}\ngrid_hi={:.17g}\ngrid_steps={}\ntrain_f1={:.17g}\n",
      index_name(kind), threshold, grid.lo, grid.hi, grid.steps, train_f1);
}

ThresholdModel ThresholdModel::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(fmt::format("bad threshold model line '{}'", line));
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(fmt::format("threshold model lacks '{}'", key));
    return it->second;
  };
  ThresholdModel m;
  try {
    m.kind = parse_index(get("kind"));
    m.threshold = std::stod(get("threshold"));
    m.grid.lo = std::stod(get("grid_lo"));
    m.grid.hi = std::stod(get("grid_hi"));
    m.grid.steps = std::stoi(get("grid_steps"));
    m.train_f1 = std::stod(get("train_f1"));
  } catch (const std::invalid_argument&) {
    throw DataError("threshold model has a non-numeric field");
  }
  return m;
}

BinaryMask binarize(const ScalarField& field, double threshold) {
  BinaryMask out(field.height, field.width);
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    // NaN compares false.
    out.labels[i] = static_cast<double>(field.values[i]) >= threshold ? 1 : 0;
  }
  return out;
}

double percentile(std::vector<float> values, double q) {
  std::erase_if(values, [](float v) { return std::isnan(v); });
  if (values.empty()) throw DataError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto below = static_cast<std::size_t>(std::floor(pos));
  const auto above = std::min(below + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(below);
  return static_cast<double>(values[below]) +
         frac * (static_cast<double>(values[above]) - static_cast<double>(values[below]));
}

ThresholdGrid percentile_grid(std::span<const float> values, int steps) {
  std::vector<float> finite;
  finite.reserve(values.size());
  for (float v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  if (finite.empty()) throw DataError("no finite change values to build a threshold grid");
  ThresholdGrid grid;
  grid.steps = steps;
  grid.lo = percentile(finite, 0.01);
  grid.hi = percentile(finite, 0.99);
  if (!(grid.lo < grid.hi)) {
    const auto [mn, mx] = std::minmax_element(finite.begin(), finite.end());
    grid.lo = *mn;
    grid.hi = *mx;
  }
  if (!(grid.lo < grid.hi)) throw DataError("change field is constant; no threshold can separate it");
  grid.validate();
  return grid;
}

PooledPixels pool_change_pixels(IndexKind kind, const std::vector<BitemporalSample>& samples) {
  PooledPixels pooled;
  for (const auto& s : samples) {
    s.validate();
    const auto field = compute_change(kind, s.pre, s.post);
    pooled.values.insert(pooled.values.end(), field.values.begin(), field.values.end());
    pooled.labels.insert(pooled.labels.end(), s.truth.labels.begin(), s.truth.labels.end());
  }
  return pooled;
}

namespace {

// Sorted finite values per class; NaN pixels always predict unburnt.
struct SortedClasses {
  std::vector<float> burnt;
  std::vector<float> unburnt;
  std::uint64_t nan_burnt = 0;
  std::uint64_t nan_unburnt = 0;

  explicit SortedClasses(const PooledPixels& p) {
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const bool label = p.labels[i] != 0;
      if (std::isnan(p.values[i])) {
        ++(label ? nan_burnt : nan_unburnt);
      } else {
        (label ? burnt : unburnt).push_back(p.values[i]);
      }
    }
    std::sort(burnt.begin(), burnt.end());
    std::sort(unburnt.begin(), unburnt.end());
  }

  static std::uint64_t at_least(const std::vector<float>& sorted, double t) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), t,
                               [](float v, double x) { return static_cast<double>(v) < x; });
    return static_cast<std::uint64_t>(sorted.end() - it);
  }

  ConfusionCounts counts(double t) const {
    ConfusionCounts c;
    c.tp = at_least(burnt, t);
    c.fn = burnt.size() - c.tp + nan_burnt;
    c.fp = at_least(unburnt, t);
    c.tn = unburnt.size() - c.fp + nan_unburnt;
    return c;
  }
};

}  // namespace

ConfusionCounts threshold_counts(const PooledPixels& pixels, double threshold) {
  return SortedClasses(pixels).counts(threshold);
}

GridSearchResult search_grid(const PooledPixels& pixels, const ThresholdGrid& grid) {
  grid.validate();
  if (pixels.values.size() != pixels.labels.size()) throw ShapeError("pooled values/labels differ in length");
  const SortedClasses sorted(pixels);
  GridSearchResult result;
  result.f1.resize(static_cast<std::size_t>(grid.steps));
  result.best_index = 0;
  result.best_f1 = -1.0;
  for (int i = 0; i < grid.steps; ++i) {
    const double f1 = class_metrics(sorted.counts(grid.at(i))).f1;
    result.f1[static_cast<std::size_t>(i)] = f1;
    if (f1 > result.best_f1) {
      result.best_f1 = f1;
      result.best_index = i;
    }
  }
  return result;
}

ThresholdModel fit_threshold(IndexKind kind, const std::vector<BitemporalSample>& train, int steps) {
  const auto pooled = pool_change_pixels(kind, train);
  const auto burnt = static_cast<std::size_t>(
      std::count_if(pooled.labels.begin(), pooled.labels.end(), [](std::uint8_t v) { return v != 0; }));
  if (burnt == 0 || burnt == pooled.labels.size()) {
    throw DataError(fmt::format("threshold fit for {} needs both classes in training pixels ({} burnt of {})",
                                index_name(kind), burnt, pooled.labels.size()));
  }
  ThresholdModel model;
  model.kind = kind;
  model.grid = percentile_grid(pooled.values, steps);
  const auto search = search_grid(pooled, model.grid);
  model.threshold = model.grid.at(search.best_index);
  model.train_f1 = search.best_f1;
  return model;
}

}  // namespace burnscar
