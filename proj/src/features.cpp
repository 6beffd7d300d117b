#include "burnscar/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "burnscar/error.hpp"
#include "burnscar/rng.hpp"

namespace burnscar {

std::string FeatureDescriptor::name() const {
  switch (source) {
    case FeatureSource::PreBand: return fmt::format("pre_{}", band_name(band));
    case FeatureSource::PostBand: return fmt::format("post_{}", band_name(band));
    case FeatureSource::PreIndex: return fmt::format("pre_{}", index_name(index));
    case FeatureSource::PostIndex: return fmt::format("post_{}", index_name(index));
    case FeatureSource::DeltaIndex:
      if (is_bitemporal(index)) return std::string(index_name(index));
      return fmt::format("d{}", index_name(index));
  }
  return {};
}

std::string_view schema_variant_name(SchemaVariant v) noexcept {
  switch (v) {
    case SchemaVariant::All: return "All";
    case SchemaVariant::MI: return "MI";
    case SchemaVariant::DSI: return "dSI";
  }
  return "?";
}

SchemaVariant parse_schema_variant(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "all") return SchemaVariant::All;
  if (lower == "mi") return SchemaVariant::MI;
  if (lower == "dsi") return SchemaVariant::DSI;
  throw ConfigError(fmt::format("unknown feature schema '{}' (expected All, MI or dSI)", name));
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.name());
  return out;
}

std::string FeatureSchema::serialize() const { return fmt::format("{}", fmt::join(names(), ",")); }

namespace {

void append_bitemporal(std::vector<FeatureDescriptor>& out) {
  out.push_back({FeatureSource::DeltaIndex, BandId::B02, IndexKind::RDNBR});
  out.push_back({FeatureSource::DeltaIndex, BandId::B02, IndexKind::RBR});
}

}  // namespace

FeatureSchema make_all_schema(const std::vector<BandId>& bands) {
  FeatureSchema s;
  s.variant = SchemaVariant::All;
  for (BandId b : bands) s.entries.push_back({FeatureSource::PreBand, b, IndexKind::NBR});
  for (BandId b : bands) s.entries.push_back({FeatureSource::PostBand, b, IndexKind::NBR});
  for (FeatureSource src : {FeatureSource::PreIndex, FeatureSource::PostIndex, FeatureSource::DeltaIndex}) {
    for (IndexKind k : unitemporal_index_kinds()) s.entries.push_back({src, BandId::B02, k});
  }
  append_bitemporal(s.entries);
  return s;
}

FeatureSchema make_dsi_schema() {
  FeatureSchema s;
  s.variant = SchemaVariant::DSI;
  for (IndexKind k : unitemporal_index_kinds()) {
    s.entries.push_back({FeatureSource::DeltaIndex, BandId::B02, k});
  }
  append_bitemporal(s.entries);
  return s;
}

FeatureSchema derive_mi_schema(const FeatureSchema& all, std::span<const double> importances,
                               double cutoff) {
  if (importances.size() != all.size()) {
    throw DataError(fmt::format("importance vector has {} entries, schema has {}",
                                importances.size(), all.size()));
  }
  FeatureSchema s;
  s.variant = SchemaVariant::MI;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (importances[i] > cutoff) s.entries.push_back(all.entries[i]);
  }
  return s;
}

namespace {

std::vector<std::size_t> split_quota(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> q(parts, parts ? total / parts : 0);
  for (std::size_t i = 0; i < (parts ? total % parts : 0); ++i) ++q[i];
  return q;
}

void draw(std::vector<std::uint32_t>& pool, std::size_t k, Rng& rng,
          std::vector<std::uint32_t>& out) {
  k = std::min(k, pool.size());
  std::sample(pool.begin(), pool.end(), std::back_inserter(out), k, rng);
}

}  // namespace

PixelSampling sample_pixels(const std::vector<BitemporalSample>& samples, std::size_t n,
                            std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) {
    throw ConfigError(fmt::format("pixel sample size must be a positive even number, got {}", n));
  }
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].is_positive() ? positives : negatives).push_back(i);
  }
  if (positives.empty()) throw DataError("pixel sampling needs at least one patch with burnt pixels");

  Rng neg_rng(derive_seed(seed, "pixel-negatives"));
  std::shuffle(negatives.begin(), negatives.end(), neg_rng);
  negatives.resize(std::min(negatives.size(), positives.size()));

  std::vector<std::size_t> selected = positives;
  selected.insert(selected.end(), negatives.begin(), negatives.end());
  std::sort(selected.begin(), selected.end());

  const auto burnt_q = split_quota(n / 2, positives.size());
  const auto unburnt_q = split_quota(n / 2, selected.size());

  PixelSampling out;
  std::size_t pos_rank = 0;
  for (std::size_t rank = 0; rank < selected.size(); ++rank) {
    const std::size_t si = selected[rank];
    const auto& s = samples[si];
    s.validate();
    Rng rng(derive_seed(seed, "pixel-patch", si));

    std::vector<std::uint32_t> burnt, land, water;
    for (std::uint32_t p = 0; p < s.truth.labels.size(); ++p) {
      if (s.truth.labels[p]) {
        burnt.push_back(p);
      } else if (s.water && s.water->labels[p]) {
        water.push_back(p);
      } else {
        land.push_back(p);
      }
    }

    PatchDraw d;
    d.sample = si;
    d.has_water = !water.empty();
    d.burnt_requested = s.is_positive() ? burnt_q[pos_rank++] : 0;
    d.unburnt_requested = unburnt_q[rank];

    std::vector<std::uint32_t> picked_burnt, picked_water, picked_land;
    draw(burnt, d.burnt_requested, rng, picked_burnt);
    const std::size_t water_q =
        d.has_water ? static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(d.unburnt_requested)))
                    : 0;
    draw(water, water_q, rng, picked_water);
    draw(land, d.unburnt_requested - picked_water.size(), rng, picked_land);

    d.burnt_selected = picked_burnt.size();
    d.water_selected = picked_water.size();
    d.unburnt_selected = picked_water.size() + picked_land.size();
    out.burnt_shortfall += d.burnt_requested - d.burnt_selected;
    out.unburnt_shortfall += d.unburnt_requested - d.unburnt_selected;

    const auto w = static_cast<std::uint32_t>(s.width());
    auto emit = [&](const std::vector<std::uint32_t>& idx, std::uint8_t label) {
      for (std::uint32_t p : idx) out.positions.push_back({si, p / w, p % w, label});
    };
    emit(picked_burnt, 1);
    std::vector<std::uint32_t> unburnt = picked_water;
    unburnt.insert(unburnt.end(), picked_land.begin(), picked_land.end());
    std::sort(unburnt.begin(), unburnt.end());
    emit(unburnt, 0);
    out.patches.push_back(d);
  }
  return out;
}

namespace {

/// Lazily computed per-feature planes for one sample.
class FeaturePlanes {
 public:
  FeaturePlanes(const FeatureSchema& schema, const BitemporalSample& s) {
    planes_.reserve(schema.size());
    for (const auto& e : schema.entries) planes_.push_back(plane(e, s));
  }

  float value(std::size_t feature, std::size_t pixel) const { return planes_[feature][pixel]; }

 private:
  std::vector<float> plane(const FeatureDescriptor& e, const BitemporalSample& s) {
    switch (e.source) {
      case FeatureSource::PreBand: {
        const auto p = s.pre.plane(e.band);
        return {p.begin(), p.end()};
      }
      case FeatureSource::PostBand: {
        const auto p = s.post.plane(e.band);
        return {p.begin(), p.end()};
      }
      case FeatureSource::PreIndex: return compute_index(e.index, s.pre).values;
      case FeatureSource::PostIndex: return compute_index(e.index, s.post).values;
      case FeatureSource::DeltaIndex: return compute_change(e.index, s.pre, s.post).values;
    }
    return {};
  }

  std::vector<std::vector<float>> planes_;
};

void fill_row(const FeaturePlanes& planes, std::size_t nfeat, std::size_t pixel, double* row,
              std::vector<std::size_t>* nan_counts) {
  for (std::size_t f = 0; f < nfeat; ++f) {
    const float v = planes.value(f, pixel);
    if (std::isnan(v)) {
      row[f] = 0.0;
      if (nan_counts) ++(*nan_counts)[f];
    } else {
      row[f] = v;
    }
  }
}

}  // namespace

std::vector<PixelFeatureVector> assemble_features(const FeatureSchema& schema,
                                                  const BitemporalSample& sample,
                                                  std::span<const PixelPosition> positions,
                                                  std::vector<std::size_t>* nan_counts) {
  if (nan_counts) nan_counts->resize(schema.size(), 0);
  const FeaturePlanes planes(schema, sample);
  std::vector<PixelFeatureVector> out;
  out.reserve(positions.size());
  for (const auto& p : positions) {
    if (p.row >= sample.height() || p.col >= sample.width()) {
      throw ShapeError(fmt::format("pixel ({}, {}) outside {}x{} patch '{}'", p.row, p.col,
                                   sample.height(), sample.width(), sample.event_id));
    }
    PixelFeatureVector v;
    v.features.resize(schema.size());
    fill_row(planes, schema.size(), p.row * sample.width() + p.col, v.features.data(), nan_counts);
    v.label = p.label;
    v.event_id = sample.event_id;
    v.row = p.row;
    v.col = p.col;
    out.push_back(std::move(v));
  }
  return out;
}

FeatureDataset assemble_dataset(const FeatureSchema& schema,
                                const std::vector<BitemporalSample>& samples,
                                const PixelSampling& sampling) {
  FeatureDataset d;
  d.schema = schema;
  d.nan_counts.assign(schema.size(), 0);
  d.matrix.cols = schema.size();

  std::map<std::size_t, std::vector<PixelPosition>> by_sample;
  for (const auto& p : sampling.positions) {
    if (p.sample >= samples.size()) throw DataError("pixel position refers to a missing sample");
    by_sample[p.sample].push_back(p);
  }
  for (const auto& [si, positions] : by_sample) {
    for (auto& v : assemble_features(schema, samples[si], positions, &d.nan_counts)) {
      d.matrix.values.insert(d.matrix.values.end(), v.features.begin(), v.features.end());
      d.matrix.labels.push_back(v.label);
      d.event_ids.push_back(std::move(v.event_id));
      d.rows.push_back(v.row);
      d.cols.push_back(v.col);
    }
  }
  d.matrix.rows = d.matrix.labels.size();
  return d;
}

FeatureDataset assemble_dense(const FeatureSchema& schema, const std::vector<BitemporalSample>& samples) {
  FeatureDataset d;
  d.schema = schema;
  d.nan_counts.assign(schema.size(), 0);
  d.matrix.cols = schema.size();
  std::size_t total = 0;
  for (const auto& s : samples) total += s.truth.labels.size();
  d.matrix.values.resize(total * schema.size());
  d.matrix.labels.reserve(total);
  std::size_t r = 0;
  for (const auto& s : samples) {
    s.validate();
    const FeaturePlanes planes(schema, s);
    for (std::size_t p = 0; p < s.truth.labels.size(); ++p, ++r) {
      fill_row(planes, schema.size(), p, d.matrix.values.data() + r * schema.size(), &d.nan_counts);
      d.matrix.labels.push_back(s.truth.labels[p]);
      d.event_ids.push_back(s.event_id);
      d.rows.push_back(static_cast<std::uint32_t>(p / s.width()));
      d.cols.push_back(static_cast<std::uint32_t>(p % s.width()));
    }
  }
  d.matrix.rows = total;
  return d;
}

void write_feature_csv(const FeatureDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot open '{}' for writing", path.string()));
  out << data.schema.serialize() << ",label,event_id,row,col\n";
  for (std::size_t i = 0; i < data.matrix.rows; ++i) {
    for (double v : data.matrix.row(i)) out << fmt::format("{:.9g},", v);
    out << fmt::format("{},{},{},{}\n", data.matrix.labels[i], data.event_ids[i], data.rows[i],
                       data.cols[i]);
  }
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace burnscar
