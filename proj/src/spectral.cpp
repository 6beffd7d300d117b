#include "burnscar/spectral.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "burnscar/error.hpp"

namespace burnscar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(double num, double den) { return den == 0.0 ? kNaN : num / den; }

double root(double x) { return x < 0.0 ? kNaN : std::sqrt(x); }

double normalized_difference(double a, double b) { return ratio(a - b, a + b); }

struct IndexInfo {
  IndexKind kind;
  std::string_view name;
};

constexpr std::array<IndexInfo, 15> kIndexInfo = {{
    {IndexKind::SAVI, "SAVI"},
    {IndexKind::NDVI, "NDVI"},
    {IndexKind::EVI, "EVI"},
    {IndexKind::NDWI, "NDWI"},
    {IndexKind::BAI, "BAI"},
    {IndexKind::NBR, "NBR"},
    {IndexKind::NBR2, "NBR2"},
    {IndexKind::NBRPLUS, "NBRPLUS"},
    {IndexKind::MIRBI, "MIRBI"},
    {IndexKind::CSI, "CSI"},
    {IndexKind::BAIS2, "BAIS2"},
    {IndexKind::NBI, "NBI"},
    {IndexKind::ABAI, "ABAI"},
    {IndexKind::RDNBR, "RDNBR"},
    {IndexKind::RBR, "RBR"},
}};

// Gathers one pixel's reflectances into BandId order; absent bands stay NaN.
class PixelReader {
 public:
  explicit PixelReader(const RasterPatch& patch) : patch_(patch) {
    for (std::size_t ch = 0; ch < patch.bands().size(); ++ch) {
      channel_[static_cast<std::size_t>(patch.bands()[ch])] = static_cast<int>(ch);
    }
  }

  void read(std::size_t pixel, std::array<double, kBandCount>& out) const {
    const auto data = patch_.data();
    for (std::size_t b = 0; b < kBandCount; ++b) {
      out[b] = channel_[b] < 0
                   ? kNaN
                   : static_cast<double>(data[static_cast<std::size_t>(channel_[b]) * patch_.pixel_count() + pixel]);
    }
  }

 private:
  const RasterPatch& patch_;
  std::array<int, kBandCount> channel_{-1, -1, -1, -1, -1, -1, -1, -1, -1, -1};
};

void require_bands(IndexKind kind, const RasterPatch& patch, const BandMapping& mapping) {
  for (BandId b : required_bands(kind, mapping)) {
    if (!patch.has_band(b)) {
      throw DataError(fmt::format("index {} requires band {}, which the patch lacks",
                                  index_name(kind), band_name(b)));
    }
  }
}

void require_same_shape(const RasterPatch& pre, const RasterPatch& post) {
  if (pre.height() != post.height() || pre.width() != post.width()) {
    throw ShapeError(fmt::format("pre patch is {}x{} but post patch is {}x{}", pre.height(),
                                 pre.width(), post.height(), post.width()));
  }
}

std::vector<double> index_values(IndexKind kind, const RasterPatch& patch,
                                 const BandMapping& mapping) {
  require_bands(kind, patch, mapping);
  std::vector<double> out(patch.pixel_count());
  PixelReader reader(patch);
  std::array<double, kBandCount> pixel{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    reader.read(i, pixel);
    out[i] = evaluate_index(kind, pixel, mapping);
  }
  return out;
}

template <typename Combine>
ScalarField combine_pair(IndexKind source, IndexKind required, const RasterPatch& pre,
                         const RasterPatch& post, const BandMapping& mapping, Combine combine) {
  require_same_shape(pre, post);
  require_bands(required, pre, mapping);
  require_bands(required, post, mapping);
  const auto a = index_values(source, pre, mapping);
  const auto b = index_values(source, post, mapping);
  ScalarField out(pre.height(), pre.width());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<float>(combine(a[i], b[i]));
  }
  return out;
}

}  // namespace

const std::vector<IndexKind>& all_index_kinds() {
  static const std::vector<IndexKind> kinds = [] {
    std::vector<IndexKind> v;
    for (const auto& info : kIndexInfo) v.push_back(info.kind);
    return v;
  }();
  return kinds;
}

const std::vector<IndexKind>& unitemporal_index_kinds() {
  static const std::vector<IndexKind> kinds = [] {
    std::vector<IndexKind> v;
    for (const auto& info : kIndexInfo) {
      if (!is_bitemporal(info.kind)) v.push_back(info.kind);
    }
    return v;
  }();
  return kinds;
}

bool is_bitemporal(IndexKind kind) noexcept {
  return kind == IndexKind::RDNBR || kind == IndexKind::RBR;
}

std::string_view index_name(IndexKind kind) noexcept {
  return kIndexInfo[static_cast<std::size_t>(kind)].name;
}

IndexKind parse_index(std::string_view name) {
  std::string key(name);
  for (auto& c : key) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (key == "NBR+") return IndexKind::NBRPLUS;
  for (const auto& info : kIndexInfo) {
    if (info.name == key) return info.kind;
  }
  throw ConfigError(fmt::format("unknown spectral index '{}'", name));
}

const BandMapping& default_band_mapping() {
  static const BandMapping mapping{};
  return mapping;
}

std::vector<BandId> required_bands(IndexKind kind, const BandMapping& m) {
  std::vector<BandId> bands;
  switch (kind) {
    case IndexKind::SAVI:
    case IndexKind::NDVI: bands = {m.nir, m.red}; break;
    case IndexKind::EVI: bands = {m.nir, m.red, m.blue}; break;
    case IndexKind::NDWI: bands = {m.green, m.nir}; break;
    case IndexKind::BAI: bands = {m.red, m.nir}; break;
    case IndexKind::NBR:
    case IndexKind::RDNBR:
    case IndexKind::RBR: bands = {m.nir, m.swir}; break;
    case IndexKind::NBR2:
    case IndexKind::MIRBI: bands = {m.swir1, m.swir2}; break;
    case IndexKind::NBRPLUS: bands = {m.swir, m.nir, m.green, m.blue}; break;
    case IndexKind::CSI: bands = {m.nir, m.swir}; break;
    case IndexKind::BAIS2: bands = {m.red_edge, m.nir1, m.nir2, m.red, m.swir}; break;
    case IndexKind::NBI: bands = {m.swir, m.blue}; break;
    case IndexKind::ABAI: bands = {m.swir1, m.swir2, m.green}; break;
  }
  std::sort(bands.begin(), bands.end());
  bands.erase(std::unique(bands.begin(), bands.end()), bands.end());
  return bands;
}

double evaluate_index(IndexKind kind, std::span<const double, kBandCount> r, const BandMapping& m) {
  const auto v = [&](BandId b) { return r[static_cast<std::size_t>(b)]; };
  const double blue = v(m.blue), green = v(m.green), red = v(m.red);
  const double nir = v(m.nir), swir = v(m.swir);
  switch (kind) {
    case IndexKind::SAVI: return 1.5 * ratio(nir - red, nir + red + 0.5);
    case IndexKind::NDVI: return normalized_difference(nir, red);
    case IndexKind::EVI: return 2.5 * ratio(nir - red, nir + 6.0 * red - 7.5 * blue + 1.0);
    case IndexKind::NDWI: return normalized_difference(green, nir);
    case IndexKind::BAI: {
      const double dr = 0.1 - red;
      const double dn = 0.06 - nir;
      return ratio(1.0, dr * dr + dn * dn);
    }
    case IndexKind::NBR: return normalized_difference(nir, swir);
    case IndexKind::NBR2: return normalized_difference(v(m.swir1), v(m.swir2));
    case IndexKind::NBRPLUS:
      return ratio(swir - nir - green - blue, swir + nir + green + blue);
    case IndexKind::MIRBI: return 10.0 * v(m.swir1) - 9.8 * v(m.swir2) + 2.0;
    case IndexKind::CSI: return ratio(nir, swir);
    case IndexKind::BAIS2: {
      const double nir2 = v(m.nir2);
      const double vegetation = 1.0 - root(ratio(v(m.red_edge) * v(m.nir1) * nir2, red));
      const double burn = ratio(swir - nir2, root(swir + nir2)) + 1.0;
      return vegetation * burn;
    }
    case IndexKind::NBI: return normalized_difference(swir, blue);
    case IndexKind::ABAI: {
      const double a = 3.0 * v(m.swir1), b = 2.0 * v(m.swir2), c = 3.0 * green;
      return ratio(a - b - c, a + b + c);
    }
    case IndexKind::RDNBR:
    case IndexKind::RBR: break;
  }
  throw DataError(fmt::format("index {} needs a pre/post pair", index_name(kind)));
}

ScalarField compute_index(IndexKind kind, const RasterPatch& patch, const BandMapping& mapping) {
  if (is_bitemporal(kind)) {
    throw DataError(fmt::format("index {} needs a pre/post pair", index_name(kind)));
  }
  const auto values = index_values(kind, patch, mapping);
  ScalarField out(patch.height(), patch.width());
  std::transform(values.begin(), values.end(), out.values.begin(),
                 [](double v) { return static_cast<float>(v); });
  return out;
}

ScalarField compute_delta(IndexKind kind, const RasterPatch& pre, const RasterPatch& post,
                          const BandMapping& mapping) {
  if (is_bitemporal(kind)) {
    throw DataError(fmt::format("{} is already bitemporal and has no delta form", index_name(kind)));
  }
  return combine_pair(kind, kind, pre, post, mapping, [](double a, double b) { return a - b; });
}

ScalarField compute_rdnbr(const RasterPatch& pre, const RasterPatch& post, const BandMapping& mapping) {
  return combine_pair(IndexKind::NBR, IndexKind::RDNBR, pre, post, mapping, [](double a, double b) {
    return ratio(a - b, std::sqrt(std::abs(a / 1000.0)));
  });
}

ScalarField compute_rbr(const RasterPatch& pre, const RasterPatch& post, const BandMapping& mapping) {
  return combine_pair(IndexKind::NBR, IndexKind::RBR, pre, post, mapping,
                      [](double a, double b) { return ratio(a - b, a + 1.001); });
}

ScalarField compute_change(IndexKind kind, const RasterPatch& pre, const RasterPatch& post,
                           const BandMapping& mapping) {
  switch (kind) {
    case IndexKind::RDNBR: return compute_rdnbr(pre, post, mapping);
    case IndexKind::RBR: return compute_rbr(pre, post, mapping);
    default: return compute_delta(kind, pre, post, mapping);
  }
}

}  // namespace burnscar
