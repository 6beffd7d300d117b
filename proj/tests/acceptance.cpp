// Acceptance run: one PASS/FAIL line per criterion.
// Usage: burnscar_acceptance [path/to/burnscar] [criterion numbers to run, default all]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <unistd.h>

#include "burnscar/bamcd.hpp"
#include "burnscar/classical.hpp"
#include "burnscar/features.hpp"
#include "burnscar/metrics.hpp"
#include "burnscar/spectral.hpp"
#include "burnscar/synthetic.hpp"
#include "burnscar/threshold.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace burnscar;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<BitemporalSample> of_split(const std::vector<BitemporalSample>& all, Split s) {
  std::vector<BitemporalSample> out;
  for (const auto& x : all) {
    if (x.split == s) out.push_back(x);
  }
  return out;
}

// ------------------------------------------------------------------ 1

RasterPatch one_pixel(const oracle::Pixel& p) {
  return RasterPatch(1, 1, all_bands(),
                     {float(p.b02), float(p.b03), float(p.b04), float(p.b05), float(p.b06), float(p.b07),
                      float(p.b08), float(p.b8a), float(p.b11), float(p.b12)});
}

Outcome formula_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<float> u(0.001f, 1.0f);
  const auto draw = [&] {
    return oracle::Pixel{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
  };
  double worst = 0.0;
  std::size_t mismatches = 0, checked = 0;
  const auto compare = [&](double got, double expected) {
    ++checked;
    if (std::isnan(expected) || std::isnan(got)) {
      mismatches += std::isnan(expected) != std::isnan(got);
      return;
    }
    const double rel = expected == 0.0 ? std::abs(got) : std::abs(got - expected) / std::abs(expected);
    worst = std::max(worst, rel);
  };
  for (int i = 0; i < 1000; ++i) {
    const auto pre = draw(), post = draw();
    const auto pre_patch = one_pixel(pre), post_patch = one_pixel(post);
    for (IndexKind k : unitemporal_index_kinds()) {
      compare(compute_index(k, pre_patch).values[0], oracle::unitemporal().at(std::string(index_name(k)))(pre));
    }
    compare(compute_rdnbr(pre_patch, post_patch).values[0], oracle::rdnbr(pre, post));
    compare(compute_rbr(pre_patch, post_patch).values[0], oracle::rbr(pre, post));
  }
  const double t = seconds_since(t0);
  const std::size_t kinds = unitemporal_index_kinds().size() + 2;
  return {kinds == 15 && mismatches == 0 && worst < 1e-6 && t < 5.0,
          fmt::format("{} indices x 1000 pixels, max rel err {:.2e}, NaN mismatches {}, {:.2f} s", kinds, worst,
                      mismatches, t)};
}

// ------------------------------------------------------------------ 2

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t failed = 0;
  const auto cases = gradcheck::cases();
  for (const auto& c : cases) {
    const double e = gradcheck::gradient_error(c.build, c.inputs);
    if (!(e < gradcheck::kTolerance)) ++failed;
    if (e > worst || std::isnan(e)) {
      worst = e;
      worst_name = c.name;
    }
  }
  const double t = seconds_since(t0);
  return {failed == 0 && t < 60.0, fmt::format("{} cases, {} failed, max rel err {:.2e} ({}), {:.2f} s", cases.size(),
                                               failed, worst, worst_name, t)};
}

// ------------------------------------------------------------------ 3

Outcome threshold_oracle() {
  const auto& kinds = all_index_kinds();
  int disagreements = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticDatasetConfig cfg;
    cfg.patch.patch_size = 32;
    cfg.patch.noise = 0.01 * static_cast<double>(seed % 5);
    cfg.patch.water_probability = 0.3;
    cfg.train_patches = 8;
    cfg.val_patches = cfg.test_patches = 0;
    const auto train = generate_synthetic_dataset(1000 + seed, cfg);
    const IndexKind kind = kinds[seed % kinds.size()];
    const auto model = fit_threshold(kind, train);
    const auto pooled = pool_change_pixels(kind, train);
    std::vector<double> candidates;
    for (int i = 0; i < model.grid.steps; ++i) candidates.push_back(model.grid.at(i));
    const auto scan = oracle::brute_force_scan(pooled.values, pooled.labels, candidates, oracle::f1_from_counts);
    disagreements += model.threshold != candidates[static_cast<std::size_t>(scan.best_index)] ||
                     model.train_f1 != scan.best_f1;
  }
  return {disagreements == 0, fmt::format("20 datasets, {} disagreements with brute-force scan", disagreements)};
}

// ------------------------------------------------------------------ 4

Outcome metric_identities() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::uint64_t> d(0, 1'000'000);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
    const auto m = class_metrics(c);
    worst = std::max(worst, std::abs(m.f1 - 2.0 * m.iou / (1.0 + m.iou)));
  }
  const auto hand = class_metrics(ConfusionCounts{3, 1, 2, 0});
  const bool hand_ok = std::abs(hand.precision - 0.75) < 1e-12 && std::abs(hand.recall - 0.6) < 1e-12 &&
                       std::abs(hand.f1 - 2.0 / 3.0) < 1e-12 && std::abs(hand.iou - 0.5) < 1e-12;
  return {worst <= 1e-12 && hand_ok,
          fmt::format("max |F1 - 2IoU/(1+IoU)| {:.1e} over 10000 draws; hand case P {:.4f} R {:.4f} F1 {:.4f} IoU {:.4f}",
                      worst, hand.precision, hand.recall, hand.f1, hand.iou)};
}

// ------------------------------------------------------------------ 5

/// Whether every positive patch holds at least its even share of the burnt quota,
/// remainders going to the earliest positive patches.
bool burnt_strata_suffice(const std::vector<BitemporalSample>& samples, std::size_t n) {
  std::vector<std::size_t> burnt;
  for (const auto& s : samples) {
    if (s.is_positive()) burnt.push_back(s.truth.count());
  }
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < burnt.size(); ++i) {
    const std::size_t quota = half / burnt.size() + (i < half % burnt.size() ? 1 : 0);
    if (burnt[i] < quota) return false;
  }
  return true;
}

Outcome sampling_invariants() {
  int violations = 0, water_patches = 0, sufficient = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    SyntheticDatasetConfig cfg;
    cfg.patch.patch_size = 48;
    cfg.patch.noise = 0.02;
    cfg.patch.water_probability = 0.5;
    cfg.patch.area_fraction_min = 0.1;
    cfg.patch.area_fraction_max = 0.3;
    cfg.train_patches = 12;
    cfg.val_patches = cfg.test_patches = 0;
    const auto samples = generate_synthetic_dataset(5000 + trial, cfg);
    const std::size_t n = 2 * (100 + 9 * trial);
    const auto s = sample_pixels(samples, n, trial);
    std::size_t burnt = 0;
    for (const auto& p : s.positions) burnt += p.label;
    const std::size_t unburnt = s.positions.size() - burnt;
    if (burnt_strata_suffice(samples, n)) {
      ++sufficient;
      violations += burnt != n / 2 || unburnt != n / 2;
    } else {
      violations += burnt + s.burnt_shortfall != n / 2 || unburnt + s.unburnt_shortfall != n / 2;
    }
    for (const auto& d : s.patches) {
      if (!d.has_water) continue;
      ++water_patches;
      const auto quota = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(d.unburnt_requested)));
      violations += d.water_selected < quota;
    }
  }
  return {violations == 0 && water_patches > 0 && sufficient > 0,
          fmt::format("100 trials ({} with sufficient burnt strata), {} water-bearing patch draws, {} violations",
                      sufficient, water_patches, violations)};
}

// ------------------------------------------------------------------ 6

FeatureMatrix separable(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureMatrix m;
  m.cols = 2;
  while (m.rows < n) {
    const double a = u(rng), b = u(rng);
    if (std::abs(a + b) < 0.2) continue;
    m.values.insert(m.values.end(), {a, b});
    m.labels.push_back(a + b > 0 ? 1 : 0);
    ++m.rows;
  }
  return m;
}

double burnt_f1(const std::vector<double>& p, const std::vector<std::uint8_t>& y) {
  std::vector<std::uint8_t> pred(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) pred[i] = p[i] >= 0.5;
  return class_metrics(accumulate(pred, y)).f1;
}

Outcome classical_learners() {
  const auto t0 = Clock::now();
  const auto train = separable(31, 2000), test = separable(32, 2000);
  const auto forest = rf_fit(train, ForestParams{}, 1);
  const double rf_f1 = burnt_f1(predict_rows(forest, test), test.labels);
  double sum = 0.0;
  for (double v : forest.feature_importances) sum += v;
  MlpParams p;
  p.epochs = 30;
  const auto mlp = mlp_fit(train, p, 7);
  const double mlp_f1 = burnt_f1(predict_rows(mlp.model, test), test.labels);
  const double t = seconds_since(t0);
  return {rf_f1 >= 0.95 && mlp_f1 >= 0.95 && std::abs(sum - 1.0) <= 1e-9 && t < 120.0,
          fmt::format("RF F1 {:.4f}, MLP F1 {:.4f}, importance sum - 1 = {:.1e}, {:.1f} s", rf_f1, mlp_f1, sum - 1.0, t)};
}

// ------------------------------------------------------------------ 7, 8

SyntheticDatasetConfig standard_benchmark(double noise) {
  SyntheticDatasetConfig cfg;  // 40/10/10 patches of 64x64
  cfg.patch.noise = noise;
  cfg.patch.water_probability = 0.3;
  return cfg;
}

MetricReport dnbr_oracle(const std::vector<BitemporalSample>& all) {
  const auto model = fit_threshold(IndexKind::NBR, of_split(all, Split::Train));
  return compute_metrics(threshold_counts(pool_change_pixels(IndexKind::NBR, of_split(all, Split::Test)), model.threshold));
}

Outcome index_baseline() {
  const double clean = dnbr_oracle(generate_synthetic_dataset(42, standard_benchmark(0.0))).burnt.f1;
  const double noisy = dnbr_oracle(generate_synthetic_dataset(42, standard_benchmark(0.02))).burnt.f1;
  return {clean >= 0.99 && noisy >= 0.90,
          fmt::format("dNBR test burnt F1 {:.4f} noiseless, {:.4f} at noise 0.02", clean, noisy)};
}

bool same_trace(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].epoch != b[i].epoch || std::memcmp(&a[i].train_loss, &b[i].train_loss, sizeof(double)) != 0 ||
        std::memcmp(&a[i].val_f1_burnt, &b[i].val_f1_burnt, sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

Outcome bamcd_mini() {
  const auto all = generate_synthetic_dataset(42, standard_benchmark(0.02));
  const auto train_set = of_split(all, Split::Train), val_set = of_split(all, Split::Val);
  const auto test_set = of_split(all, Split::Test);
  const double oracle_iou = dnbr_oracle(all).burnt.iou;

  auto cfg = BamCdConfig::mini();
  cfg.seed = 1;
  const auto t0 = Clock::now();
  const auto first = train(build(cfg), train_set, val_set);
  const double t = seconds_since(t0);
  const double iou = compute_metrics(evaluate(first.model, test_set)).burnt.iou;
  const auto second = train(build(cfg), train_set, val_set);
  const bool reproducible = same_trace(first.trace, second.trace);
  return {cfg.epochs <= 30 && iou >= 0.85 && iou >= oracle_iou && t < 900.0 && reproducible,
          fmt::format("{} epochs (best {}), test burnt IoU {:.4f} vs dNBR oracle {:.4f}, {:.0f} s, trace {}",
                      cfg.epochs, first.best_epoch, iou, oracle_iou, t,
                      reproducible ? "bitwise reproducible" : "NOT reproducible")};
}

// ------------------------------------------------------------------ 9

Outcome architecture() {
  const auto mini = BamCdConfig::mini();
  const std::size_t analytic = count_parameters(mini);
  const std::size_t built = build(mini).parameter_count();
  const std::size_t paper_like = count_parameters(BamCdConfig::paper_like());
  constexpr double kReference = 83.7e6;
  const double deviation = (static_cast<double>(paper_like) - kReference) / kReference;
  return {analytic == oracle::kMiniParameters && built == oracle::kMiniParameters,
          fmt::format("mini {} (hand count {}, built {}); paper-like {} vs ~83.7M reference, {:+.1f}%{}", analytic,
                      oracle::kMiniParameters, built, paper_like, 100.0 * deviation,
                      std::abs(deviation) > 0.10 ? " [flagged: open architecture question, see README]" : "")};
}

// ------------------------------------------------------------------ 10

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).generic_string()] = ss.str();
  }
  return out;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

Outcome cli_determinism(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "burnscar executable not given or missing"};
  const fs::path work = fs::temp_directory_path() / fmt::format("burnscar-acceptance-{}", ::getpid());
  fs::remove_all(work);
  fs::create_directories(work / "raw");

  // Raw little-endian arrays for ingest, cut from one synthetic scene.
  SyntheticConfig scene_cfg;
  scene_cfg.patch_size = 64;
  scene_cfg.noise = 0.02;
  const auto scene = generate_synthetic_event(99, scene_cfg);
  const auto dump = [&](const fs::path& p, const void* data, std::size_t bytes) {
    std::ofstream(p, std::ios::binary).write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  };
  dump(work / "raw" / "pre.f32", scene.pre.data().data(), scene.pre.data().size() * sizeof(float));
  dump(work / "raw" / "post.f32", scene.post.data().data(), scene.post.data().size() * sizeof(float));
  dump(work / "raw" / "truth.u8", scene.truth.labels.data(), scene.truth.labels.size());

  const std::string common = "seed = 17\nsynth.events = 10\nsynth.patch_size = 32\nsynth.noise = 0.02\n";
  write_text(work / "synth.cfg", common);
  write_text(work / "ingest.cfg", fmt::format("ingest.pre = {0}/raw/pre.f32\ningest.post = {0}/raw/post.f32\n"
                                              "ingest.truth = {0}/raw/truth.u8\ningest.height = 64\n"
                                              "ingest.width = 64\ningest.patch_size = 32\ningest.event_id = scene\n",
                                              work.string()));
  write_text(work / "index.cfg", common + fmt::format("manifest = {}/data/manifest.csv\nmethod = NBR\n", work.string()));
  write_text(work / "ml.cfg", common + fmt::format("manifest = {}/data/manifest.csv\nmethod = rf\nrf.n_trees = 10\n"
                                                   "ml.sample_size = 400\n",
                                                   work.string()));
  write_text(work / "dl.cfg", common + fmt::format("manifest = {}/data/manifest.csv\nmethod = bamcd\n"
                                                   "bamcd.stem_width = 4\nbamcd.widths = 4, 8\nbamcd.blocks = 1, 1\n"
                                                   "bamcd.epochs = 2\nbamcd.batch_size = 4\n",
                                                   work.string()));

  const auto run = [&](const std::string& args) {
    const std::string cmd = fmt::format("\"{}\" {} > /dev/null", cli, args);
    return std::system(cmd.c_str()) == 0;
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "synth -c {w}/synth.cfg -o {w}/{r}/synth"},
      {"ingest", "ingest -c {w}/ingest.cfg -o {w}/{r}/ingest"},
      {"index-eval", "index-eval -c {w}/index.cfg -o {w}/{r}/index --repeats 2"},
      {"ml-run", "ml-run -c {w}/ml.cfg -o {w}/{r}/ml --repeats 2"},
      {"dl-run", "dl-run -c {w}/dl.cfg -o {w}/{r}/dl"},
      {"report", "report -o {w}/{r}/report {w}/{r}/index {w}/{r}/ml {w}/{r}/dl"},
  };
  // The dataset every evaluation command reads.
  if (!run(fmt::format("synth -c {0}/synth.cfg -o {0}/data", work.string()))) {
    return {false, "synth of the shared dataset failed"};
  }
  std::vector<std::string> differing;
  std::size_t files = 0;
  for (const auto& [name, pattern] : commands) {
    bool ok = true;
    for (const char* r : {"a", "b"}) {
      ok = ok && run(fmt::format(fmt::runtime(pattern), fmt::arg("w", work.string()), fmt::arg("r", r)));
    }
    const fs::path sub = name == "synth"        ? "synth"
                         : name == "ingest"     ? "ingest"
                         : name == "index-eval" ? "index"
                         : name == "ml-run"     ? "ml"
                         : name == "dl-run"     ? "dl"
                                                : "report";
    const auto a = ok ? tree_contents(work / "a" / sub) : decltype(tree_contents(work)){};
    const auto b = ok ? tree_contents(work / "b" / sub) : decltype(tree_contents(work)){};
    if (!ok || a.empty() || a != b) differing.push_back(name + (ok ? "" : " (failed)"));
    files += a.size();
  }
  fs::remove_all(work);
  return {differing.empty(),
          differing.empty() ? fmt::format("6 commands run twice, {} output files byte-identical", files)
                            : fmt::format("differing: {}", fmt::join(differing, ", "))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"spectral index formula oracles", formula_oracles},
      {"autodiff gradient checks", gradient_checks},
      {"threshold search vs brute force", threshold_oracle},
      {"metric identities", metric_identities},
      {"pixel sampling invariants", sampling_invariants},
      {"classical learners on separable data", classical_learners},
      {"end-to-end dNBR baseline", index_baseline},
      {"end-to-end BAM-CD mini", bamcd_mini},
      {"architecture parameter counts", architecture},
      {"CLI determinism", [&] { return cli_determinism(cli); }},
  };
  std::vector<bool> selected(criteria.size(), argc <= 2);
  for (int a = 2; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= static_cast<int>(criteria.size())) selected[static_cast<std::size_t>(k - 1)] = true;
  }
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !o.pass;
    fmt::print("[{}] {:2}. {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
