#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "burnscar/raster.hpp"

namespace burnscar {

enum class IndexKind {
  SAVI,
  NDVI,
  EVI,
  NDWI,
  BAI,
  NBR,
  NBR2,
  NBRPLUS,
  MIRBI,
  CSI,
  BAIS2,
  NBI,
  ABAI,
  RDNBR,
  RBR,
};

/// All fifteen kinds, unitemporal first.
const std::vector<IndexKind>& all_index_kinds();
/// The thirteen kinds that can be evaluated on a single patch.
const std::vector<IndexKind>& unitemporal_index_kinds();

bool is_bitemporal(IndexKind kind) noexcept;
std::string_view index_name(IndexKind kind) noexcept;
/// Case-insensitive; accepts "NBR+" for NBRPLUS.
IndexKind parse_index(std::string_view name);

/// Formula symbol to Sentinel-2 band binding.
struct BandMapping {
  BandId blue = BandId::B02;
  BandId green = BandId::B03;
  BandId red = BandId::B04;
  BandId red_edge = BandId::B06;
  BandId nir = BandId::B8A;
  BandId nir1 = BandId::B07;
  BandId nir2 = BandId::B8A;
  BandId swir = BandId::B12;
  BandId swir1 = BandId::B11;
  BandId swir2 = BandId::B12;
};

const BandMapping& default_band_mapping();

/// Distinct bands the formula reads under `mapping` (NBR bands for RDNBR/RBR).
std::vector<BandId> required_bands(IndexKind kind, const BandMapping& mapping = default_band_mapping());

/// Dense H x W field of index values; NaN where the formula is undefined.
struct ScalarField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  ScalarField() = default;
  ScalarField(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), values(h * w, fill) {}

  float at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

/// Evaluates a unitemporal formula on one pixel. `reflectance` is indexed by BandId.
/// Arithmetic is done in double; returns NaN on division by zero or a negative radicand.
double evaluate_index(IndexKind kind, std::span<const double, kBandCount> reflectance,
                      const BandMapping& mapping = default_band_mapping());

/// Throws DataError for bitemporal kinds or when a required band is missing.
ScalarField compute_index(IndexKind kind, const RasterPatch& patch,
                          const BandMapping& mapping = default_band_mapping());

/// pre-index minus post-index, pixelwise. NaN propagates from either side.
ScalarField compute_delta(IndexKind kind, const RasterPatch& pre, const RasterPatch& post,
                          const BandMapping& mapping = default_band_mapping());

/// (NBR_pre - NBR_post) / sqrt(|NBR_pre / 1000|), applied to unscaled NBR.
ScalarField compute_rdnbr(const RasterPatch& pre, const RasterPatch& post,
                          const BandMapping& mapping = default_band_mapping());

/// (NBR_pre - NBR_post) / (NBR_pre + 1.001).
ScalarField compute_rbr(const RasterPatch& pre, const RasterPatch& post,
                        const BandMapping& mapping = default_band_mapping());

/// The change field used for thresholding: the delta for unitemporal kinds, the
/// bitemporal index itself for RDNBR and RBR.
ScalarField compute_change(IndexKind kind, const RasterPatch& pre, const RasterPatch& post,
                           const BandMapping& mapping = default_band_mapping());

}  // namespace burnscar
