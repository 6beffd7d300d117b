#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "burnscar/error.hpp"
#include "burnscar/features.hpp"
#include "burnscar/synthetic.hpp"

namespace burnscar {
namespace {

std::vector<BitemporalSample> dataset(std::uint64_t seed, double water = 0.5) {
  SyntheticDatasetConfig cfg;
  cfg.patch.patch_size = 32;
  cfg.patch.noise = 0.02;
  cfg.patch.water_probability = water;
  cfg.train_patches = 12;
  cfg.val_patches = cfg.test_patches = 0;
  cfg.negative_fraction = 0.25;
  return generate_synthetic_dataset(seed, cfg);
}

TEST(Schema, Cardinalities) {
  EXPECT_EQ(make_all_schema().size(), 61u);
  EXPECT_EQ(make_dsi_schema().size(), 15u);
  const auto names = make_all_schema().names();
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), names.size());
  EXPECT_EQ(names.front(), "pre_B02");
  EXPECT_EQ(names[10], "post_B02");
  EXPECT_EQ(names.back(), "RBR");
}

TEST(Schema, DsiIsSuffixOfAll) {
  const auto all = make_all_schema();
  const auto dsi = make_dsi_schema();
  for (std::size_t i = 0; i < dsi.size(); ++i) {
    EXPECT_EQ(dsi.entries[i], all.entries[all.size() - dsi.size() + i]);
  }
}

TEST(Schema, MiKeepsOrderAboveCutoff) {
  const auto all = make_all_schema();
  std::vector<double> imp(all.size(), 0.0);
  imp[3] = 0.5;
  imp[40] = 0.011;
  imp[50] = 0.01;
  const auto mi = derive_mi_schema(all, imp);
  ASSERT_EQ(mi.size(), 2u);
  EXPECT_EQ(mi.entries[0], all.entries[3]);
  EXPECT_EQ(mi.entries[1], all.entries[40]);
  EXPECT_EQ(mi.variant, SchemaVariant::MI);
  EXPECT_THROW(derive_mi_schema(all, std::vector<double>(3, 1.0)), DataError);
}

TEST(Schema, SerializationIsStable) {
  EXPECT_EQ(make_all_schema().serialize(), make_all_schema().serialize());
  EXPECT_EQ(parse_schema_variant("DSI"), SchemaVariant::DSI);
  EXPECT_THROW(parse_schema_variant("foo"), ConfigError);
}

TEST(Sampling, BalancedAndReproducible) {
  const auto samples = dataset(7);
  const auto a = sample_pixels(samples, 2000, 11);
  const auto b = sample_pixels(samples, 2000, 11);
  EXPECT_EQ(a.positions, b.positions);
  std::size_t burnt = 0;
  for (const auto& p : a.positions) burnt += p.label;
  EXPECT_EQ(burnt + a.burnt_shortfall, 1000u);
  EXPECT_EQ(a.positions.size() - burnt + a.unburnt_shortfall, 1000u);
  EXPECT_EQ(a.unburnt_shortfall, 0u);
  EXPECT_EQ(sample_pixels(samples, 200, 11).burnt_shortfall, 0u);
}

TEST(Sampling, LabelsMatchTruthAndNoDuplicates) {
  const auto samples = dataset(3);
  const auto s = sample_pixels(samples, 1000, 5);
  std::set<std::tuple<std::size_t, std::uint32_t, std::uint32_t>> seen;
  for (const auto& p : s.positions) {
    EXPECT_EQ(p.label, samples[p.sample].truth.at(p.row, p.col));
    EXPECT_TRUE(seen.insert({p.sample, p.row, p.col}).second);
  }
}

TEST(Sampling, NegativesMatchPositivesCount) {
  const auto samples = dataset(2);
  std::size_t pos = 0;
  for (const auto& s : samples) pos += s.is_positive();
  const auto s = sample_pixels(samples, 400, 1);
  std::size_t neg_selected = 0;
  for (const auto& d : s.patches) neg_selected += !samples[d.sample].is_positive();
  const std::size_t neg_total = samples.size() - pos;
  EXPECT_EQ(neg_selected, std::min(pos, neg_total));
}

TEST(Sampling, QuotaRemaindersGoToEarliest) {
  const auto samples = dataset(4, 0.0);
  const auto s = sample_pixels(samples, 202, 1);
  std::size_t prev = SIZE_MAX;
  for (const auto& d : s.patches) {
    EXPECT_LE(d.unburnt_requested, prev);
    prev = d.unburnt_requested;
  }
}

TEST(Sampling, WaterQuotaOnWaterPatches) {
  const auto samples = dataset(9, 1.0);
  const auto s = sample_pixels(samples, 2000, 2);
  bool any = false;
  for (const auto& d : s.patches) {
    if (!d.has_water) continue;
    any = true;
    EXPECT_GE(d.water_selected,
              static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(d.unburnt_requested))));
  }
  EXPECT_TRUE(any);
}

TEST(Sampling, ShortfallIsReported) {
  auto samples = dataset(5, 0.0);
  const auto s = sample_pixels(samples, 200000, 1);
  EXPECT_GT(s.burnt_shortfall, 0u);
}

TEST(Sampling, RejectsOddOrNoPositives) {
  const auto samples = dataset(1);
  EXPECT_THROW(sample_pixels(samples, 3, 1), ConfigError);
  std::vector<BitemporalSample> negatives;
  for (const auto& s : samples) {
    if (!s.is_positive()) negatives.push_back(s);
  }
  EXPECT_THROW(sample_pixels(negatives, 10, 1), DataError);
}

TEST(Assemble, ValuesMatchDirectComputation) {
  const auto samples = dataset(8);
  const auto sampling = sample_pixels(samples, 200, 3);
  const auto schema = make_all_schema();
  const auto d = assemble_dataset(schema, samples, sampling);
  ASSERT_EQ(d.matrix.rows, sampling.positions.size());
  ASSERT_EQ(d.matrix.cols, 61u);
  for (std::size_t i = 0; i < d.matrix.rows; i += 17) {
    const auto it = std::find_if(samples.begin(), samples.end(),
                                 [&](const auto& s) { return s.event_id == d.event_ids[i]; });
    ASSERT_NE(it, samples.end());
    const auto row = d.matrix.row(i);
    EXPECT_EQ(row[0], it->pre.at(0, d.rows[i], d.cols[i]));
    const auto dnbr = compute_change(IndexKind::NBR, it->pre, it->post);
    const std::size_t dnbr_col = 20 + 26 + 5;
    EXPECT_EQ(schema.entries[dnbr_col].name(), "dNBR");
    EXPECT_EQ(row[dnbr_col], dnbr.at(d.rows[i], d.cols[i]));
    EXPECT_EQ(d.matrix.labels[i], it->truth.at(d.rows[i], d.cols[i]));
  }
}

TEST(Assemble, NanBecomesZeroAndIsCounted) {
  auto sample = dataset(1).front();
  // All-zero pre reflectance makes NDVI 0/0 everywhere.
  for (float& v : sample.pre.data()) v = 0.0f;
  FeatureSchema schema;
  schema.entries.push_back({FeatureSource::PreIndex, BandId::B02, IndexKind::NDVI});
  std::vector<PixelPosition> pos{{0, 0, 0, 0}, {0, 1, 1, 0}};
  std::vector<std::size_t> nan;
  const auto v = assemble_features(schema, sample, pos, &nan);
  EXPECT_EQ(v[0].features[0], 0.0);
  EXPECT_EQ(nan[0], 2u);
}

TEST(Assemble, DenseCoversEveryPixel) {
  const auto samples = dataset(2);
  const auto d = assemble_dense(make_dsi_schema(), samples);
  EXPECT_EQ(d.matrix.rows, samples.size() * 32 * 32);
}

TEST(Assemble, CsvHasHeaderAndRows) {
  const auto samples = dataset(2);
  const auto d = assemble_dataset(make_dsi_schema(), samples, sample_pixels(samples, 20, 1));
  const auto path = std::filesystem::temp_directory_path() / "burnscar_features_test.csv";
  write_feature_csv(d, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, make_dsi_schema().serialize() + ",label,event_id,row,col");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, d.matrix.rows);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace burnscar
