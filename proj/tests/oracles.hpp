#pragma once

// Independent re-implementations used as test oracles. Nothing here calls into the
// library code path it checks.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace oracle {

/// One pixel under the default band binding, written out with Sentinel-2 names.
struct Pixel {
  double b02, b03, b04, b05, b06, b07, b08, b8a, b11, b12;
};

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }
inline double div(double a, double b) { return b == 0.0 ? nan() : a / b; }

// Table formulas with Blue=B02 Green=B03 Red=B04 RedEdge=B06 NIR=B8A NIR1=B07
// NIR2=B8A SWIR=B12 SWIR1=B11 SWIR2=B12.
inline double savi(const Pixel& p) { return 1.5 * div(p.b8a - p.b04, p.b8a + p.b04 + 0.5); }
inline double ndvi(const Pixel& p) { return div(p.b8a - p.b04, p.b8a + p.b04); }
inline double evi(const Pixel& p) {
  return 2.5 * div(p.b8a - p.b04, p.b8a + 6.0 * p.b04 - 7.5 * p.b02 + 1.0);
}
inline double ndwi(const Pixel& p) { return div(p.b03 - p.b8a, p.b03 + p.b8a); }
inline double bai(const Pixel& p) {
  return div(1.0, std::pow(0.1 - p.b04, 2) + std::pow(0.06 - p.b8a, 2));
}
inline double nbr(const Pixel& p) { return div(p.b8a - p.b12, p.b8a + p.b12); }
inline double nbr2(const Pixel& p) { return div(p.b11 - p.b12, p.b11 + p.b12); }
inline double nbr_plus(const Pixel& p) {
  return div(p.b12 - p.b8a - p.b03 - p.b02, p.b12 + p.b8a + p.b03 + p.b02);
}
inline double mirbi(const Pixel& p) { return (10 * p.b11) - (9.8 * p.b12) + 2; }
inline double csi(const Pixel& p) { return div(p.b8a, p.b12); }
inline double bais2(const Pixel& p) {
  const double inner = div(p.b06 * p.b07 * p.b8a, p.b04);
  const double left = inner < 0 ? nan() : 1.0 - std::sqrt(inner);
  const double s = p.b12 + p.b8a;
  const double right = s < 0 ? nan() : div(p.b12 - p.b8a, std::sqrt(s)) + 1.0;
  return left * right;
}
inline double nbi(const Pixel& p) { return div(p.b12 - p.b02, p.b12 + p.b02); }
inline double abai(const Pixel& p) {
  return div(3 * p.b11 - 2 * p.b12 - 3 * p.b03, 3 * p.b11 + 2 * p.b12 + 3 * p.b03);
}
inline double rdnbr(const Pixel& pre, const Pixel& post) {
  return div(nbr(pre) - nbr(post), std::sqrt(std::fabs(nbr(pre) / 1000.0)));
}
inline double rbr(const Pixel& pre, const Pixel& post) {
  return div(nbr(pre) - nbr(post), nbr(pre) + 1.001);
}

inline const std::map<std::string, double (*)(const Pixel&)>& unitemporal() {
  static const std::map<std::string, double (*)(const Pixel&)> table = {
      {"SAVI", savi}, {"NDVI", ndvi},   {"EVI", evi},     {"NDWI", ndwi},   {"BAI", bai},
      {"NBR", nbr},   {"NBR2", nbr2},   {"NBRPLUS", nbr_plus}, {"MIRBI", mirbi}, {"CSI", csi},
      {"BAIS2", bais2}, {"NBI", nbi},   {"ABAI", abai}};
  return table;
}

/// Harmonic mean of precision and recall, 0 where a ratio is undefined.
inline double f1_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t) {
  const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

/// Naive threshold scan: for each candidate recount every pixel from scratch.
struct ScanResult {
  int best_index = -1;
  double best_f1 = -1.0;
};

template <typename F1>
ScanResult brute_force_scan(const std::vector<float>& values, const std::vector<std::uint8_t>& labels,
                            const std::vector<double>& candidates, F1 f1_of_counts) {
  ScanResult r;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const bool pred = !std::isnan(values[k]) && static_cast<double>(values[k]) >= candidates[i];
      const bool truth = labels[k] != 0;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
      tn += !pred && !truth;
    }
    const double f1 = f1_of_counts(tp, fp, fn, tn);
    if (f1 > r.best_f1) {
      r.best_f1 = f1;
      r.best_index = static_cast<int>(i);
    }
  }
  return r;
}

// Layer-by-layer count of the mini network on ten bands.
//   encoder: stem 10*16*9+32 = 1472
//            stage0 2*(16*16*9+32) = 4672
//            stage1 (16*32*9+64) + (32*32*9+64) + (16*32+64) = 14528
//            stage2 (32*64*9+128) + (64*64*9+128) + (32*64+128) = 57728
//            stage3 (64*128*9+256) + (128*128*9+256) + (64*128+256) = 230144   -> 308544
//   decoder: level3 (256*128*9+256) + (128*128*9+256) + scSE(128) 16705 = 459585
//            level2 (256*64*9+128) + (64*64*9+128) + scSE(64) 4257 = 188833
//            level1 (128*32*9+64) + (32*32*9+64) + scSE(32) 1105 = 47313
//            level0 (64*16*9+32) + (16*16*9+32) + scSE(16) 297 = 11881         -> 707612
//   head 16+1 = 17
inline constexpr std::size_t kMiniEncoderParameters = 308544;
inline constexpr std::size_t kMiniParameters = 308544 + 707612 + 17;

}  // namespace oracle
