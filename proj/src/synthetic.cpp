#include "burnscar/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "burnscar/error.hpp"
#include "burnscar/rng.hpp"

namespace burnscar {

namespace {

//                                 B02   B03   B04   B05   B06   B07   B08   B8A   B11   B12
constexpr SpectralProfile kVegetation{{0.04f, 0.07f, 0.06f, 0.12f, 0.30f, 0.38f, 0.42f, 0.45f, 0.20f, 0.12f}};
constexpr SpectralProfile kBurnt{{0.05f, 0.07f, 0.09f, 0.11f, 0.15f, 0.17f, 0.17f, 0.18f, 0.30f, 0.28f}};
constexpr SpectralProfile kWater{{0.06f, 0.05f, 0.03f, 0.02f, 0.02f, 0.015f, 0.015f, 0.012f, 0.008f, 0.006f}};

struct Point {
  double x;
  double y;
};

// Even-odd rule.
bool inside(const std::vector<Point>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

constexpr double kVertexJitter = 0.2;

}  // namespace

const SpectralProfile& vegetation_profile() { return kVegetation; }
const SpectralProfile& burnt_profile() { return kBurnt; }
const SpectralProfile& water_profile() { return kWater; }

void SyntheticConfig::validate() const {
  if (patch_size < 4) throw ConfigError("synthetic patch_size must be at least 4");
  if (bands.empty()) throw ConfigError("synthetic band list is empty");
  if (polygons_min < 0 || polygons_max < polygons_min) {
    throw ConfigError("synthetic polygon count range is invalid");
  }
  if (area_fraction_min < 0.0 || area_fraction_max < area_fraction_min) {
    throw ConfigError("synthetic polygon area range is invalid");
  }
  const double max_radius = std::sqrt(area_fraction_max / std::numbers::pi) *
                            static_cast<double>(patch_size) * (1.0 + kVertexJitter);
  if (2.0 * max_radius > static_cast<double>(patch_size)) {
    throw ConfigError(fmt::format("burn polygon (area fraction {}) does not fit in a {}-pixel patch",
                                  area_fraction_max, patch_size));
  }
  if (polygon_vertices < 3) throw ConfigError("burn polygons need at least 3 vertices");
  if (!(severity_min > 0.0) || severity_max > 1.0 || severity_max < severity_min) {
    throw ConfigError("burn severity range must lie in (0, 1]");
  }
  if (noise < 0.0) throw ConfigError("noise must be non-negative");
  if (water_probability < 0.0 || water_probability > 1.0) {
    throw ConfigError("water_probability must lie in [0, 1]");
  }
  if (water_depth <= 0.0 || water_depth >= 1.0) throw ConfigError("water_depth must lie in (0, 1)");
  if (!(clip_max > 0.0f)) throw ConfigError("clip_max must be positive");
}

BitemporalSample generate_synthetic_event(std::uint64_t seed, const SyntheticConfig& config) {
  config.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = config.patch_size;
  const auto side = static_cast<double>(n);

  BitemporalSample s;
  s.pre = RasterPatch(n, n, config.bands);
  s.post = RasterPatch(n, n, config.bands);
  s.truth = BinaryMask(n, n);
  BinaryMask water(n, n);
  std::vector<float> severity(n * n, 0.0f);

  if (unit(rng) < config.water_probability) {
    const int edge = static_cast<int>(unit(rng) * 4.0) % 4;
    const auto depth = static_cast<std::size_t>(std::ceil(config.water_depth * side));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const bool wet = (edge == 0 && r < depth) || (edge == 1 && r >= n - depth) ||
                         (edge == 2 && c < depth) || (edge == 3 && c >= n - depth);
        water.at(r, c) = wet ? 1 : 0;
      }
    }
    s.water = water;
  }

  if (config.burnt) {
    std::uniform_int_distribution<int> count(config.polygons_min, config.polygons_max);
    const int polygons = count(rng);
    for (int p = 0; p < polygons; ++p) {
      const double fraction =
          config.area_fraction_min + unit(rng) * (config.area_fraction_max - config.area_fraction_min);
      const double radius = std::sqrt(fraction / std::numbers::pi) * side;
      const double reach = radius * (1.0 + kVertexJitter);
      const double cx = reach + unit(rng) * (side - 2.0 * reach);
      const double cy = reach + unit(rng) * (side - 2.0 * reach);
      const double sev =
          config.severity_min + unit(rng) * (config.severity_max - config.severity_min);
      std::vector<Point> poly;
      const double phase = unit(rng) * 2.0 * std::numbers::pi;
      for (int v = 0; v < config.polygon_vertices; ++v) {
        const double angle = phase + 2.0 * std::numbers::pi * v / config.polygon_vertices;
        const double rv = radius * (1.0 - kVertexJitter + 2.0 * kVertexJitter * unit(rng));
        poly.push_back({cx + rv * std::cos(angle), cy + rv * std::sin(angle)});
      }
      if (radius <= 0.0) continue;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          if (water.at(r, c)) continue;
          if (inside(poly, static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5)) {
            s.truth.at(r, c) = 1;
            severity[r * n + c] = std::max(severity[r * n + c], static_cast<float>(sev));
          }
        }
      }
    }
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto draw = [&](float mean) {
    if (config.noise == 0.0) return mean;
    return static_cast<float>(mean + config.noise * gauss(rng));
  };
  for (std::size_t ch = 0; ch < config.bands.size(); ++ch) {
    const BandId band = config.bands[ch];
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        float pre_mean = kVegetation[band];
        float post_mean = pre_mean;
        if (water.at(r, c)) {
          pre_mean = post_mean = kWater[band];
        } else if (s.truth.at(r, c)) {
          post_mean = pre_mean + severity[r * n + c] * (kBurnt[band] - pre_mean);
        }
        s.pre.at(ch, r, c) = draw(pre_mean);
        s.post.at(ch, r, c) = draw(post_mean);
      }
    }
  }
  clip_reflectance(s.pre.data(), config.clip_max);
  clip_reflectance(s.post.data(), config.clip_max);
  return s;
}

SplitCounts split_counts(std::size_t events) {
  SplitCounts c;
  c.train = static_cast<std::size_t>(std::lround(0.6 * static_cast<double>(events)));
  c.val = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(events)));
  if (c.train + c.val > events) c.val = events - c.train;
  c.test = events - c.train - c.val;
  return c;
}

std::vector<BitemporalSample> generate_synthetic_dataset(std::uint64_t seed,
                                                         const SyntheticDatasetConfig& config) {
  std::vector<BitemporalSample> out;
  const std::pair<Split, std::size_t> plan[] = {{Split::Train, config.train_patches},
                                                {Split::Val, config.val_patches},
                                                {Split::Test, config.test_patches}};
  std::size_t index = 0;
  for (const auto& [split, count] : plan) {
    const auto negatives =
        static_cast<std::size_t>(std::floor(config.negative_fraction * static_cast<double>(count)));
    for (std::size_t i = 0; i < count; ++i, ++index) {
      SyntheticConfig patch = config.patch;
      // Negatives sit at the end of each split so positives keep stable seeds when
      // negative_fraction changes.
      patch.burnt = i < count - negatives;
      auto sample = generate_synthetic_event(derive_seed(seed, "synthetic-patch", index), patch);
      sample.event_id = fmt::format("event-{:03d}", index);
      sample.split = split;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

}  // namespace burnscar
