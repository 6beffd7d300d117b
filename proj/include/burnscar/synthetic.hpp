#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "burnscar/raster.hpp"

namespace burnscar {

/// Mean surface reflectance of a land-cover class per band (B02 ... B12 order).
struct SpectralProfile {
  float reflectance[kBandCount];

  float operator[](BandId b) const { return reflectance[static_cast<std::size_t>(b)]; }
};

const SpectralProfile& vegetation_profile();
const SpectralProfile& burnt_profile();
const SpectralProfile& water_profile();

struct SyntheticConfig {
  std::size_t patch_size = 64;
  std::vector<BandId> bands = all_bands();
  bool burnt = true;  ///< false yields a negative patch (no burn polygons)
  int polygons_min = 1;
  int polygons_max = 3;
  /// Per-polygon area as a fraction of the patch area.
  double area_fraction_min = 0.02;
  double area_fraction_max = 0.12;
  int polygon_vertices = 9;
  /// Burn severity s mixes the post-fire reflectance as veg + s * (burnt - veg).
  double severity_min = 0.5;
  double severity_max = 1.0;
  /// Standard deviation of additive Gaussian reflectance noise, per band and epoch.
  double noise = 0.0;
  double water_probability = 0.0;
  /// Depth of the water strip as a fraction of the patch side.
  double water_depth = 0.2;
  float clip_max = 1.0f;

  /// Throws ConfigError on degenerate settings.
  void validate() const;
};

/// One bitemporal patch: vegetated pre-fire scene, post-fire scene with burn polygons
/// rasterized at pixel centres, optional water strip along a random edge. Water pixels
/// are never burnt, so truth = union of polygons minus water.
BitemporalSample generate_synthetic_event(std::uint64_t seed, const SyntheticConfig& config);

struct SyntheticDatasetConfig {
  SyntheticConfig patch;
  std::size_t train_patches = 40;
  std::size_t val_patches = 10;
  std::size_t test_patches = 10;
  /// Fraction of patches (per split, rounded down) generated without burns.
  double negative_fraction = 0.25;
};

/// Patches numbered event-000, event-001, ... assigned to train, then val, then test.
std::vector<BitemporalSample> generate_synthetic_dataset(std::uint64_t seed,
                                                         const SyntheticDatasetConfig& config);

/// Split counts for n events: train = round(0.6 n), val = round(0.2 n), test = rest.
struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};
SplitCounts split_counts(std::size_t events);

}  // namespace burnscar
