#include "burnscar/raster.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "burnscar/error.hpp"
#include "burnscar/rng.hpp"

namespace burnscar {

namespace {

constexpr std::array<std::string_view, kBandCount> kBandNames = {
    "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B11", "B12"};

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view band_name(BandId band) noexcept {
  return kBandNames[static_cast<std::size_t>(band)];
}

BandId parse_band(std::string_view name) {
  const std::string key = upper(name);
  for (std::size_t i = 0; i < kBandNames.size(); ++i) {
    if (kBandNames[i] == key) return static_cast<BandId>(i);
  }
  throw DataError(fmt::format("unknown band name '{}'", name));
}

const std::vector<BandId>& all_bands() {
  static const std::vector<BandId> bands = {BandId::B02, BandId::B03, BandId::B04, BandId::B05,
                                            BandId::B06, BandId::B07, BandId::B08, BandId::B8A,
                                            BandId::B11, BandId::B12};
  return bands;
}

RasterPatch::RasterPatch(std::size_t height, std::size_t width, std::vector<BandId> bands)
    : RasterPatch(height, width, bands, std::vector<float>(height * width * bands.size(), 0.0f)) {}

RasterPatch::RasterPatch(std::size_t height, std::size_t width, std::vector<BandId> bands,
                         std::vector<float> data)
    : height_(height), width_(width), bands_(std::move(bands)), data_(std::move(data)) {
  if (data_.size() != height_ * width_ * bands_.size()) {
    throw ShapeError(fmt::format("raster data length {} != {}x{}x{}", data_.size(), height_,
                                 width_, bands_.size()));
  }
  std::vector<BandId> sorted = bands_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DataError("duplicate band in raster band list");
  }
}

bool RasterPatch::has_band(BandId band) const noexcept {
  return std::find(bands_.begin(), bands_.end(), band) != bands_.end();
}

std::size_t RasterPatch::band_index(BandId band) const {
  auto it = std::find(bands_.begin(), bands_.end(), band);
  if (it == bands_.end()) {
    throw DataError(fmt::format("band {} not present in raster", band_name(band)));
  }
  return static_cast<std::size_t>(it - bands_.begin());
}

std::span<float> RasterPatch::plane(std::size_t channel) {
  return std::span<float>(data_).subspan(channel * pixel_count(), pixel_count());
}

std::span<const float> RasterPatch::plane(std::size_t channel) const {
  return std::span<const float>(data_).subspan(channel * pixel_count(), pixel_count());
}

RasterPatch RasterPatch::crop(std::size_t row0, std::size_t col0, std::size_t h,
                              std::size_t w) const {
  if (row0 + h > height_ || col0 + w > width_) {
    throw ShapeError("crop window exceeds raster bounds");
  }
  RasterPatch out(h, w, bands_);
  for (std::size_t c = 0; c < bands_.size(); ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      const float* src = &data_[(c * height_ + row0 + r) * width_ + col0];
      std::copy(src, src + w, &out.at(c, r, 0));
    }
  }
  return out;
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

BinaryMask BinaryMask::crop(std::size_t row0, std::size_t col0, std::size_t h,
                            std::size_t w) const {
  if (row0 + h > height || col0 + w > width) throw ShapeError("crop window exceeds mask bounds");
  BinaryMask out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(&labels[(row0 + r) * width + col0], w, &out.labels[r * w]);
  }
  return out;
}

std::string_view split_name(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  const std::string key = upper(name);
  if (key == "TRAIN") return Split::Train;
  if (key == "VAL") return Split::Val;
  if (key == "TEST") return Split::Test;
  throw DataError(fmt::format("unknown split '{}'", name));
}

void BitemporalSample::validate() const {
  if (pre.height() != post.height() || pre.width() != post.width()) {
    throw ShapeError(fmt::format("post layer is {}x{}, pre layer is {}x{}", post.height(),
                                 post.width(), pre.height(), pre.width()));
  }
  if (pre.bands() != post.bands()) throw ShapeError("pre and post band lists differ");
  if (truth.height != pre.height() || truth.width != pre.width()) {
    throw ShapeError(fmt::format("truth layer is {}x{}, expected {}x{}", truth.height,
                                 truth.width, pre.height(), pre.width()));
  }
  if (water && (water->height != pre.height() || water->width != pre.width())) {
    throw ShapeError(fmt::format("water layer is {}x{}, expected {}x{}", water->height,
                                 water->width, pre.height(), pre.width()));
  }
}

void clip_reflectance(std::span<float> values, float clip_max) {
  for (auto& v : values) {
    if (std::isnan(v)) v = 0.0f;
    v = std::clamp(v, 0.0f, clip_max);
  }
}

std::vector<BitemporalSample> ingest_scene(const RasterPatch& pre, const RasterPatch& post,
                                           const BinaryMask& truth,
                                           const std::optional<BinaryMask>& water,
                                           std::size_t patch_size, float clip_max,
                                           const std::string& event_id, Split split) {
  if (!(clip_max > 0.0f)) throw ConfigError("clip_max must be positive");
  if (patch_size == 0) throw ConfigError("patch_size must be positive");
  BitemporalSample scene{pre, post, truth, water, event_id, split};
  scene.validate();
  if (pre.height() < patch_size || pre.width() < patch_size) {
    throw DataError(fmt::format("scene {}x{} is smaller than patch size {}", pre.height(),
                                pre.width(), patch_size));
  }

  const std::size_t tiles_y = pre.height() / patch_size;
  const std::size_t tiles_x = pre.width() / patch_size;
  std::vector<BitemporalSample> out;
  out.reserve(tiles_y * tiles_x);
  for (std::size_t ty = 0; ty < tiles_y; ++ty) {
    for (std::size_t tx = 0; tx < tiles_x; ++tx) {
      const std::size_t r0 = ty * patch_size;
      const std::size_t c0 = tx * patch_size;
      BitemporalSample tile;
      tile.pre = pre.crop(r0, c0, patch_size, patch_size);
      tile.post = post.crop(r0, c0, patch_size, patch_size);
      clip_reflectance(tile.pre.data(), clip_max);
      clip_reflectance(tile.post.data(), clip_max);
      tile.truth = truth.crop(r0, c0, patch_size, patch_size);
      if (water) tile.water = water->crop(r0, c0, patch_size, patch_size);
      tile.event_id = event_id;
      tile.split = split;
      out.push_back(std::move(tile));
    }
  }
  return out;
}

std::vector<BitemporalSample> balance_negatives(const std::vector<BitemporalSample>& samples,
                                                std::uint64_t seed) {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].is_positive() ? positives : negatives).push_back(i);
  }
  if (negatives.size() < positives.size()) {
    throw DataError(fmt::format("balance_negatives needs at least {} negative patches, found {}",
                                positives.size(), negatives.size()));
  }
  Rng rng(seed);
  std::shuffle(negatives.begin(), negatives.end(), rng);
  negatives.resize(positives.size());
  std::sort(negatives.begin(), negatives.end());

  std::vector<BitemporalSample> out;
  out.reserve(2 * positives.size());
  for (auto i : positives) out.push_back(samples[i]);
  for (auto i : negatives) out.push_back(samples[i]);
  return out;
}

}  // namespace burnscar
