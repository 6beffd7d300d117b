#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "burnscar/raster.hpp"
#include "burnscar/spectral.hpp"

namespace burnscar {

enum class FeatureSource : std::uint8_t { PreBand, PostBand, PreIndex, PostIndex, DeltaIndex };

/// One column of a pixel feature matrix. DeltaIndex with RDNBR/RBR denotes the
/// bitemporal index itself.
struct FeatureDescriptor {
  FeatureSource source = FeatureSource::PreBand;
  BandId band = BandId::B02;
  IndexKind index = IndexKind::NBR;

  std::string name() const;
  friend bool operator==(const FeatureDescriptor&, const FeatureDescriptor&) = default;
};

enum class SchemaVariant : std::uint8_t { All, MI, DSI };

std::string_view schema_variant_name(SchemaVariant v) noexcept;
SchemaVariant parse_schema_variant(std::string_view name);

struct FeatureSchema {
  SchemaVariant variant = SchemaVariant::All;
  std::vector<FeatureDescriptor> entries;

  std::size_t size() const noexcept { return entries.size(); }
  std::vector<std::string> names() const;
  /// Comma-joined names; identical schemas serialize identically.
  std::string serialize() const;
};

/// Pre bands, post bands, pre indices, post indices, deltas, then RDNBR and RBR.
FeatureSchema make_all_schema(const std::vector<BandId>& bands = all_bands());
/// The thirteen deltas plus RDNBR and RBR.
FeatureSchema make_dsi_schema();
/// All-schema entries whose importance is strictly greater than `cutoff`, order kept.
/// Throws DataError when the importance vector length differs from the schema.
FeatureSchema derive_mi_schema(const FeatureSchema& all, std::span<const double> importances,
                               double cutoff = 0.01);

struct PixelPosition {
  std::size_t sample = 0;  ///< index into the sample list passed to sample_pixels
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  std::uint8_t label = 0;

  friend bool operator==(const PixelPosition&, const PixelPosition&) = default;
};

struct PatchDraw {
  std::size_t sample = 0;
  std::size_t burnt_requested = 0;
  std::size_t burnt_selected = 0;
  std::size_t unburnt_requested = 0;
  std::size_t unburnt_selected = 0;
  std::size_t water_selected = 0;  ///< unburnt pixels taken on water
  bool has_water = false;
};

struct PixelSampling {
  std::vector<PixelPosition> positions;
  std::vector<PatchDraw> patches;  ///< one per selected patch, input order
  std::size_t burnt_shortfall = 0;
  std::size_t unburnt_shortfall = 0;
};

/// Draws N pixels (N/2 burnt, N/2 unburnt) from the positive patches plus an equal
/// number of seeded negatives. Burnt quota is split evenly over positive patches and
/// unburnt quota over all selected patches, remainders to the earliest patches. On
/// patches with water, ceil(10%) of the unburnt draw comes from water pixels.
PixelSampling sample_pixels(const std::vector<BitemporalSample>& samples, std::size_t n,
                            std::uint64_t seed);

struct PixelFeatureVector {
  std::vector<double> features;
  std::uint8_t label = 0;
  std::string event_id;
  std::uint32_t row = 0;
  std::uint32_t col = 0;
};

/// Feature vectors for positions that belong to `sample` (all positions are assumed to).
/// NaN values become 0 and are tallied per feature in `nan_counts` when provided.
std::vector<PixelFeatureVector> assemble_features(const FeatureSchema& schema,
                                                  const BitemporalSample& sample,
                                                  std::span<const PixelPosition> positions,
                                                  std::vector<std::size_t>* nan_counts = nullptr);

/// Row-major feature matrix with labels, the input of the classical learners.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> labels;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * cols, cols);
  }
};

struct FeatureDataset {
  FeatureSchema schema;
  FeatureMatrix matrix;
  std::vector<std::string> event_ids;
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> cols;
  std::vector<std::size_t> nan_counts;
};

FeatureDataset assemble_dataset(const FeatureSchema& schema,
                                const std::vector<BitemporalSample>& samples,
                                const PixelSampling& sampling);

/// Every pixel of every sample, for dense evaluation.
FeatureDataset assemble_dense(const FeatureSchema& schema, const std::vector<BitemporalSample>& samples);

/// Header "<feature names>,label,event_id,row,col" then one line per pixel.
void write_feature_csv(const FeatureDataset& data, const std::filesystem::path& path);

}  // namespace burnscar
