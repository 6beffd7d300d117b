#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "burnscar/error.hpp"
#include "burnscar/spectral.hpp"
#include "burnscar/synthetic.hpp"
#include "oracles.hpp"

namespace burnscar {
namespace {

RasterPatch one_pixel(const oracle::Pixel& p) {
  return RasterPatch(1, 1, all_bands(),
                     {float(p.b02), float(p.b03), float(p.b04), float(p.b05), float(p.b06),
                      float(p.b07), float(p.b08), float(p.b8a), float(p.b11), float(p.b12)});
}

oracle::Pixel with_nir_red(double nir, double red) {
  oracle::Pixel p{0.05, 0.07, red, 0.1, 0.2, 0.3, 0.3, nir, 0.2, 0.1};
  return p;
}

oracle::Pixel random_pixel(std::mt19937_64& rng) {
  // Values that are exactly representable as float so the oracle sees the same inputs.
  std::uniform_real_distribution<float> u(0.001f, 1.0f);
  return {u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
}

TEST(Spectral, NdviHandValue) {
  const auto f = compute_index(IndexKind::NDVI, one_pixel(with_nir_red(0.5, 0.25)));
  EXPECT_NEAR(f.values[0], 0.333333, 1e-6);
}

TEST(Spectral, NdviSymmetricIsZero) {
  const auto f = compute_index(IndexKind::NDVI, one_pixel(with_nir_red(0.3, 0.3)));
  EXPECT_EQ(f.values[0], 0.0f);
}

TEST(Spectral, MirbiConstantTerm) {
  oracle::Pixel p = with_nir_red(0.4, 0.1);
  p.b11 = 0.0;
  p.b12 = 0.0;
  EXPECT_FLOAT_EQ(compute_index(IndexKind::MIRBI, one_pixel(p)).values[0], 2.0f);
}

TEST(Spectral, MissingBandNamesIndexAndBand) {
  RasterPatch patch(2, 2, {BandId::B04, BandId::B12});
  try {
    compute_index(IndexKind::NDVI, patch);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("NDVI"), std::string::npos);
    EXPECT_NE(what.find("B8A"), std::string::npos);
  }
}

TEST(Spectral, BitemporalKindsRejectSinglePatch) {
  RasterPatch patch(1, 1, all_bands());
  EXPECT_THROW(compute_index(IndexKind::RDNBR, patch), DataError);
  EXPECT_THROW(compute_delta(IndexKind::RBR, patch, patch), DataError);
}

TEST(Spectral, ParseIsCaseInsensitive) {
  EXPECT_EQ(parse_index("ndvi"), IndexKind::NDVI);
  EXPECT_EQ(parse_index("NbR+"), IndexKind::NBRPLUS);
  EXPECT_EQ(parse_index("rdnbr"), IndexKind::RDNBR);
  EXPECT_THROW(parse_index("BAIM"), ConfigError);
}

TEST(Spectral, DeltaOfIdenticalPatchesIsZero) {
  std::mt19937_64 rng(3);
  RasterPatch patch(4, 4, all_bands());
  std::uniform_real_distribution<float> u(0.01f, 0.9f);
  for (auto& v : patch.data()) v = u(rng);
  for (IndexKind k : unitemporal_index_kinds()) {
    const auto d = compute_delta(k, patch, patch);
    for (float v : d.values) {
      if (!std::isnan(v)) {
        EXPECT_EQ(v, 0.0f) << index_name(k);
      }
    }
  }
}

TEST(Spectral, DeltaIsPreMinusPost) {
  // NDVI 0.6 pre and 0.1 post: NIR/Red of 0.8/0.2 and 0.55/0.45.
  const auto pre = one_pixel(with_nir_red(0.8, 0.2));
  const auto post = one_pixel(with_nir_red(0.55, 0.45));
  EXPECT_NEAR(compute_delta(IndexKind::NDVI, pre, post).values[0], 0.5, 1e-6);
}

TEST(Spectral, DeltaAntisymmetry) {
  std::mt19937_64 rng(11);
  RasterPatch a(8, 8, all_bands()), b(8, 8, all_bands());
  std::uniform_real_distribution<float> u(0.001f, 1.0f);
  for (auto& v : a.data()) v = u(rng);
  for (auto& v : b.data()) v = u(rng);
  for (IndexKind k : unitemporal_index_kinds()) {
    const auto ab = compute_delta(k, a, b);
    const auto ba = compute_delta(k, b, a);
    for (std::size_t i = 0; i < ab.values.size(); ++i) {
      if (std::isnan(ab.values[i])) {
        EXPECT_TRUE(std::isnan(ba.values[i]));
      } else {
        EXPECT_EQ(ab.values[i], -ba.values[i]) << index_name(k);
      }
    }
  }
}

TEST(Spectral, DeltaShapeMismatch) {
  EXPECT_THROW(compute_delta(IndexKind::NBR, RasterPatch(2, 2, all_bands()), RasterPatch(2, 3, all_bands())),
               ShapeError);
}

TEST(Spectral, SyntheticBurnHasPositiveDnbr) {
  SyntheticConfig cfg;
  cfg.polygons_min = cfg.polygons_max = 1;
  cfg.area_fraction_min = cfg.area_fraction_max = 0.1;
  const auto s = generate_synthetic_event(5, cfg);
  const auto d = compute_delta(IndexKind::NBR, s.pre, s.post);
  ASSERT_GT(s.truth.count(), 0u);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (s.truth.labels[i]) {
      EXPECT_GT(d.values[i], 0.0f);
    }
  }
}

oracle::Pixel nbr_pixel(double nbr) {
  // NIR + SWIR = 0.5 with NIR - SWIR = 0.5 * nbr.
  oracle::Pixel p = with_nir_red(0.25 + 0.25 * nbr, 0.1);
  p.b12 = 0.25 - 0.25 * nbr;
  return p;
}

TEST(Spectral, RdnbrHandValues) {
  const auto pre = one_pixel(nbr_pixel(0.5));
  const auto post = one_pixel(nbr_pixel(0.1));
  EXPECT_NEAR(compute_rdnbr(pre, post).values[0], 17.8885, 1e-3);
  EXPECT_EQ(compute_rdnbr(pre, pre).values[0], 0.0f);
  const auto zero = one_pixel(nbr_pixel(0.0));
  EXPECT_TRUE(std::isnan(compute_rdnbr(zero, post).values[0]));
}

TEST(Spectral, RbrHandValues) {
  const auto pre = one_pixel(nbr_pixel(0.5));
  const auto post = one_pixel(nbr_pixel(0.1));
  EXPECT_NEAR(compute_rbr(pre, post).values[0], 0.26649, 1e-5);
  EXPECT_EQ(compute_rbr(pre, pre).values[0], 0.0f);
  const auto minus_one = one_pixel(nbr_pixel(-1.0));
  const float v = compute_rbr(minus_one, post).values[0];
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, (-1.0 - 0.1) / 0.001, 1e-2);
}

TEST(Spectral, NormalizedDifferencesBounded) {
  std::mt19937_64 rng(17);
  RasterPatch patch(32, 32, all_bands());
  std::uniform_real_distribution<float> u(1e-6f, 1.0f);
  for (auto& v : patch.data()) v = u(rng);
  for (IndexKind k : {IndexKind::NDVI, IndexKind::NDWI, IndexKind::NBR, IndexKind::NBR2, IndexKind::NBI}) {
    for (float v : compute_index(k, patch).values) {
      ASSERT_FALSE(std::isnan(v));
      EXPECT_GE(v, -1.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Spectral, NanOnlyWhereUndefined) {
  // All-zero pixel: every ratio has a zero denominator; MIRBI and BAI stay defined.
  const auto zero = one_pixel({0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  for (IndexKind k : unitemporal_index_kinds()) {
    const float v = compute_index(k, zero).values[0];
    const double expected = oracle::unitemporal().at(std::string(index_name(k)))({0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
    EXPECT_EQ(std::isnan(v), std::isnan(expected)) << index_name(k);
  }
}

TEST(Spectral, OracleEquivalenceOnRandomPixels) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pre = random_pixel(rng);
    const auto post = random_pixel(rng);
    const auto pre_patch = one_pixel(pre);
    const auto post_patch = one_pixel(post);
    for (IndexKind k : unitemporal_index_kinds()) {
      const double expected = oracle::unitemporal().at(std::string(index_name(k)))(pre);
      const double got = compute_index(k, pre_patch).values[0];
      if (std::isnan(expected)) {
        EXPECT_TRUE(std::isnan(got));
        continue;
      }
      EXPECT_LE(std::abs(got - expected), 1e-6 * std::abs(expected)) << index_name(k);
    }
    const double rd = compute_rdnbr(pre_patch, post_patch).values[0];
    const double rd_expected = oracle::rdnbr(pre, post);
    EXPECT_LE(std::abs(rd - rd_expected), 1e-6 * std::abs(rd_expected));
    const double rb = compute_rbr(pre_patch, post_patch).values[0];
    const double rb_expected = oracle::rbr(pre, post);
    EXPECT_LE(std::abs(rb - rb_expected), 1e-6 * std::abs(rb_expected));
  }
}

}  // namespace
}  // namespace burnscar
