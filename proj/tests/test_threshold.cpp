#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "burnscar/error.hpp"
#include "burnscar/metrics.hpp"
#include "burnscar/synthetic.hpp"
#include "burnscar/threshold.hpp"
#include "oracles.hpp"

namespace burnscar {
namespace {

TEST(Binarize, BoundaryIsBurnt) {
  ScalarField f(1, 3);
  f.values = {-1.0f, 0.0f, 1.0f};
  EXPECT_EQ(binarize(f, 0.0).labels, (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(Binarize, BelowRangeAllBurnt) {
  ScalarField f(1, 3);
  f.values = {-1.0f, 0.0f, 1.0f};
  EXPECT_EQ(binarize(f, -2.0).count(), 3u);
}

TEST(Binarize, NanIsUnburnt) {
  ScalarField f(1, 2);
  f.values = {std::numeric_limits<float>::quiet_NaN(), 5.0f};
  EXPECT_EQ(binarize(f, 0.0).labels, (std::vector<std::uint8_t>{0, 1}));
}

TEST(Binarize, MonotoneInThreshold) {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> g;
  ScalarField f(20, 20);
  for (auto& v : f.values) v = g(rng);
  std::size_t last = f.values.size() + 1;
  for (double t = -4.0; t <= 4.0; t += 0.05) {
    const auto n = binarize(f, t).count();
    EXPECT_LE(n, last);
    last = n;
  }
}

TEST(Grid, PercentileInterpolates) {
  EXPECT_DOUBLE_EQ(percentile({0.0f, 10.0f}, 0.25), 2.5);
  EXPECT_DOUBLE_EQ(percentile({3.0f, 1.0f, 2.0f}, 0.5), 2.0);
}

TEST(Grid, CollapsedPercentilesWiden) {
  std::vector<float> v(1000, 0.0f);
  v[0] = 5.0f;
  const auto g = percentile_grid(v);
  EXPECT_EQ(g.lo, 0.0);
  EXPECT_EQ(g.hi, 5.0);
  EXPECT_THROW(percentile_grid(std::vector<float>(10, 1.0f)), DataError);
}

TEST(Grid, TwoPointsStraddlingGap) {
  PooledPixels p;
  p.values = {0.0f, 0.1f, 0.2f, 0.8f, 0.9f, 1.0f};
  p.labels = {0, 0, 0, 1, 1, 1};
  ThresholdGrid grid{0.1, 0.5, 2};
  const auto r = search_grid(p, grid);
  EXPECT_EQ(r.best_index, 1);
  EXPECT_DOUBLE_EQ(r.best_f1, 1.0);
  EXPECT_LT(r.f1[0], 1.0);
}

TEST(Grid, TiesPickSmallestThreshold) {
  PooledPixels p;
  p.values = {0.0f, 1.0f};
  p.labels = {0, 1};
  const auto r = search_grid(p, ThresholdGrid{0.2, 0.8, 4});
  EXPECT_EQ(r.best_index, 0);
}

std::vector<BitemporalSample> synthetic_train(std::uint64_t seed, double noise, std::size_t n = 8) {
  SyntheticDatasetConfig cfg;
  cfg.patch.patch_size = 32;
  cfg.patch.noise = noise;
  cfg.patch.water_probability = 0.3;
  cfg.train_patches = n;
  cfg.val_patches = 0;
  cfg.test_patches = 0;
  return generate_synthetic_dataset(seed, cfg);
}

TEST(FitThreshold, SeparableDataReachesF1One) {
  const auto train = synthetic_train(1, 0.0);
  const auto model = fit_threshold(IndexKind::NBR, train);
  EXPECT_DOUBLE_EQ(model.train_f1, 1.0);
  EXPECT_GT(model.threshold, 0.0);
}

TEST(FitThreshold, MatchesBruteForceScan) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto train = synthetic_train(seed, 0.05);
    for (IndexKind k : {IndexKind::NBR, IndexKind::MIRBI, IndexKind::RDNBR}) {
      const auto model = fit_threshold(k, train);
      const auto pooled = pool_change_pixels(k, train);
      std::vector<double> candidates;
      for (int i = 0; i < model.grid.steps; ++i) candidates.push_back(model.grid.at(i));
      const auto scan = oracle::brute_force_scan(pooled.values, pooled.labels, candidates, oracle::f1_from_counts);
      EXPECT_EQ(model.threshold, candidates[static_cast<std::size_t>(scan.best_index)]);
      EXPECT_EQ(model.train_f1, scan.best_f1);
    }
  }
}

TEST(FitThreshold, RefitReproducesTrainF1) {
  const auto train = synthetic_train(3, 0.08);
  const auto model = fit_threshold(IndexKind::NBR, train);
  ConfusionCounts c;
  for (const auto& s : train) {
    c += accumulate(binarize(compute_change(IndexKind::NBR, s.pre, s.post), model.threshold), s.truth);
  }
  EXPECT_EQ(class_metrics(c).f1, model.train_f1);
}

TEST(FitThreshold, SingleClassIsAnError) {
  SyntheticDatasetConfig cfg;
  cfg.patch.patch_size = 16;
  cfg.train_patches = 3;
  cfg.val_patches = cfg.test_patches = 0;
  cfg.negative_fraction = 1.0;
  EXPECT_THROW(fit_threshold(IndexKind::NBR, generate_synthetic_dataset(1, cfg)), DataError);
}

TEST(FitThreshold, SerializeRoundTrip) {
  ThresholdModel m;
  m.kind = IndexKind::MIRBI;
  m.threshold = -0.123456789012345;
  m.grid = {-1.5, 2.25, 256};
  m.train_f1 = 0.987654321;
  const auto back = ThresholdModel::parse(m.serialize());
  EXPECT_EQ(back.kind, m.kind);
  EXPECT_EQ(back.threshold, m.threshold);
  EXPECT_EQ(back.grid.lo, m.grid.lo);
  EXPECT_EQ(back.grid.hi, m.grid.hi);
  EXPECT_EQ(back.grid.steps, m.grid.steps);
  EXPECT_EQ(back.train_f1, m.train_f1);
}

}  // namespace
}  // namespace burnscar
