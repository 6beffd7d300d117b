#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace burnscar {

/// Sentinel-2 bands available at (or resampled to) 20 m.
enum class BandId : std::uint8_t { B02, B03, B04, B05, B06, B07, B08, B8A, B11, B12 };

inline constexpr std::size_t kBandCount = 10;

std::string_view band_name(BandId band) noexcept;
/// Parses "B02", "b8a", ... Throws DataError on unknown names.
BandId parse_band(std::string_view name);
/// The ten 10 m + 20 m bands in wavelength order.
const std::vector<BandId>& all_bands();

/// Dense reflectance cube stored band-major: data[(band * height + row) * width + col].
class RasterPatch {
 public:
  RasterPatch() = default;
  RasterPatch(std::size_t height, std::size_t width, std::vector<BandId> bands);
  RasterPatch(std::size_t height, std::size_t width, std::vector<BandId> bands,
              std::vector<float> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }
  const std::vector<BandId>& bands() const noexcept { return bands_; }

  bool has_band(BandId band) const noexcept;
  /// Channel position of `band`; throws DataError if absent.
  std::size_t band_index(BandId band) const;

  std::span<float> plane(std::size_t channel);
  std::span<const float> plane(std::size_t channel) const;
  std::span<const float> plane(BandId band) const { return plane(band_index(band)); }

  float& at(std::size_t channel, std::size_t row, std::size_t col) {
    return data_[(channel * height_ + row) * width_ + col];
  }
  float at(std::size_t channel, std::size_t row, std::size_t col) const {
    return data_[(channel * height_ + row) * width_ + col];
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  /// Copy of the window [row0, row0+h) x [col0, col0+w).
  RasterPatch crop(std::size_t row0, std::size_t col0, std::size_t h, std::size_t w) const;

  friend bool operator==(const RasterPatch&, const RasterPatch&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<BandId> bands_;
  std::vector<float> data_;
};

/// Row-major binary raster (ground truth, water mask, predictions).
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t row, std::size_t col) { return labels[row * width + col]; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
  std::size_t count() const noexcept;
  BinaryMask crop(std::size_t row0, std::size_t col0, std::size_t h, std::size_t w) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string_view split_name(Split split) noexcept;
Split parse_split(std::string_view name);

struct BitemporalSample {
  RasterPatch pre;
  RasterPatch post;
  BinaryMask truth;
  std::optional<BinaryMask> water;
  std::string event_id;
  Split split = Split::Train;

  std::size_t height() const noexcept { return pre.height(); }
  std::size_t width() const noexcept { return pre.width(); }
  bool is_positive() const noexcept { return truth.count() > 0; }

  /// Throws ShapeError when pre/post/truth/water disagree.
  void validate() const;

  friend bool operator==(const BitemporalSample&, const BitemporalSample&) = default;
};

/// Clamps every value to [0, clip_max]. NaN is mapped to 0.
void clip_reflectance(std::span<float> values, float clip_max);

/// Cuts a co-registered scene into non-overlapping patch_size x patch_size tiles in
/// row-major order. Partial tiles at the right/bottom border are dropped.
std::vector<BitemporalSample> ingest_scene(const RasterPatch& pre, const RasterPatch& post,
                                           const BinaryMask& truth,
                                           const std::optional<BinaryMask>& water,
                                           std::size_t patch_size, float clip_max,
                                           const std::string& event_id = "scene",
                                           Split split = Split::Train);

/// All positive samples plus an equal number of seeded, uniformly chosen negatives.
/// Positives keep their input order; chosen negatives follow in input order.
std::vector<BitemporalSample> balance_negatives(const std::vector<BitemporalSample>& samples,
                                                std::uint64_t seed);

}  // namespace burnscar
