#include "burnscar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "burnscar/config.hpp"
#include "burnscar/error.hpp"
#include "burnscar/metrics.hpp"
#include "burnscar/rng.hpp"
#include "burnscar/spectral.hpp"
#include "burnscar/threshold.hpp"

namespace burnscar {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ run config

namespace {

std::vector<BandId> parse_bands(std::string_view key, std::string_view value) {
  std::vector<BandId> out;
  for (const auto& b : split_list(value)) {
    try {
      out.push_back(parse_band(b));
    } catch (const DataError& e) {
      throw ConfigError(fmt::format("{}: {}", key, e.what()));
    }
  }
  if (out.empty()) throw ConfigError(fmt::format("{}: empty band list", key));
  return out;
}

int parse_int(std::string_view key, std::string_view value) {
  const auto v = parse_i64(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(fmt::format("{}: value out of range", key));
  }
  return static_cast<int>(v);
}

bool set_synth(RunConfig& c, std::string_view key, std::string_view v) {
  auto& p = c.synth.patch;
  if (key == "events") {
    c.synth_events = parse_u64(key, v);
  } else if (key == "train") {
    c.synth.train_patches = parse_u64(key, v);
    c.synth_explicit_splits = true;
  } else if (key == "val") {
    c.synth.val_patches = parse_u64(key, v);
    c.synth_explicit_splits = true;
  } else if (key == "test") {
    c.synth.test_patches = parse_u64(key, v);
    c.synth_explicit_splits = true;
  } else if (key == "negative_fraction") {
    c.synth.negative_fraction = parse_f64(key, v);
  } else if (key == "patch_size") {
    p.patch_size = parse_u64(key, v);
  } else if (key == "bands") {
    p.bands = parse_bands(key, v);
  } else if (key == "polygons_min") {
    p.polygons_min = parse_int(key, v);
  } else if (key == "polygons_max") {
    p.polygons_max = parse_int(key, v);
  } else if (key == "area_min") {
    p.area_fraction_min = parse_f64(key, v);
  } else if (key == "area_max") {
    p.area_fraction_max = parse_f64(key, v);
  } else if (key == "vertices") {
    p.polygon_vertices = parse_int(key, v);
  } else if (key == "severity_min") {
    p.severity_min = parse_f64(key, v);
  } else if (key == "severity_max") {
    p.severity_max = parse_f64(key, v);
  } else if (key == "noise") {
    p.noise = parse_f64(key, v);
  } else if (key == "water_probability") {
    p.water_probability = parse_f64(key, v);
  } else if (key == "water_depth") {
    p.water_depth = parse_f64(key, v);
  } else if (key == "clip_max") {
    p.clip_max = static_cast<float>(parse_f64(key, v));
  } else {
    return false;
  }
  return true;
}

bool set_ingest(IngestSettings& s, std::string_view key, std::string_view v) {
  if (key == "pre") {
    s.pre = v;
  } else if (key == "post") {
    s.post = v;
  } else if (key == "truth") {
    s.truth = v;
  } else if (key == "water") {
    s.water = v;
  } else if (key == "height") {
    s.height = parse_u64(key, v);
  } else if (key == "width") {
    s.width = parse_u64(key, v);
  } else if (key == "bands") {
    s.bands = parse_bands(key, v);
  } else if (key == "patch_size") {
    s.patch_size = parse_u64(key, v);
  } else if (key == "clip_max") {
    s.clip_max = static_cast<float>(parse_f64(key, v));
  } else if (key == "event_id") {
    s.event_id = v;
  } else if (key == "split") {
    try {
      s.split = parse_split(v);
    } catch (const DataError& e) {
      throw ConfigError(fmt::format("ingest.split: {}", e.what()));
    }
  } else {
    return false;
  }
  return true;
}

bool set_ml(RunConfig& c, std::string_view key, std::string_view v) {
  if (key == "schema") {
    c.schema = parse_schema_variant(v);
  } else if (key == "sample_size") {
    c.sample_size = parse_u64(key, v);
  } else if (key == "mi_cutoff") {
    c.mi_cutoff = parse_f64(key, v);
  } else if (key == "mi_model") {
    c.mi_model = v;
  } else if (key == "write_features") {
    c.write_features = parse_bool(key, v);
  } else {
    return false;
  }
  return true;
}

bool set_rf(ForestParams& p, std::string_view key, std::string_view v) {
  if (key == "n_trees") {
    p.n_trees = parse_int(key, v);
  } else if (key == "max_depth") {
    p.max_depth = parse_int(key, v);
  } else if (key == "min_leaf") {
    p.min_leaf = parse_int(key, v);
  } else if (key == "max_features") {
    p.max_features = parse_int(key, v);
  } else if (key == "bootstrap") {
    p.bootstrap = parse_bool(key, v);
  } else if (key == "threads") {
    p.threads = parse_int(key, v);
  } else {
    return false;
  }
  return true;
}

bool set_mlp(MlpParams& p, std::string_view key, std::string_view v) {
  if (key == "hidden") {
    p.hidden.clear();
    for (auto h : parse_size_list(key, v)) p.hidden.push_back(static_cast<int>(h));
  } else if (key == "epochs") {
    p.epochs = parse_int(key, v);
  } else if (key == "batch_size") {
    p.batch_size = parse_int(key, v);
  } else if (key == "learning_rate") {
    p.learning_rate = parse_f64(key, v);
  } else {
    return false;
  }
  return true;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig c;
  const auto entries = parse_key_values(text);
  // A profile resets every bamcd field, so it is applied before the individual keys.
  for (const auto& kv : entries) {
    if (kv.key != "bamcd.profile") continue;
    if (kv.value == "mini") {
      c.bamcd = BamCdConfig::mini();
    } else if (kv.value == "paper_like") {
      c.bamcd = BamCdConfig::paper_like();
    } else {
      throw ConfigError(fmt::format("bamcd.profile: expected mini or paper_like, got '{}'", kv.value));
    }
  }
  for (const auto& kv : entries) {
    const std::string_view key = kv.key;
    const std::string_view v = kv.value;
    const auto dot = key.find('.');
    const std::string_view group = dot == std::string_view::npos ? std::string_view{} : key.substr(0, dot);
    const std::string_view sub = dot == std::string_view::npos ? key : key.substr(dot + 1);
    bool known = true;
    if (group.empty()) {
      if (key == "manifest") {
        c.manifest = v;
      } else if (key == "method") {
        c.method = v;
      } else if (key == "seed") {
        c.seed = parse_u64(key, v);
      } else if (key == "repeats") {
        c.repeats = parse_int(key, v);
      } else if (key == "out") {
        c.out = v;
      } else {
        known = false;
      }
    } else if (group == "synth") {
      known = set_synth(c, sub, v);
    } else if (group == "ingest") {
      known = set_ingest(c.ingest, sub, v);
    } else if (group == "index") {
      known = sub == "steps";
      if (known) c.threshold_steps = parse_int(key, v);
    } else if (group == "ml") {
      known = set_ml(c, sub, v);
    } else if (group == "rf") {
      known = set_rf(c.rf, sub, v);
    } else if (group == "mlp") {
      known = set_mlp(c.mlp, sub, v);
    } else if (group == "bamcd") {
      known = sub == "profile" || c.bamcd.set(sub, v);
    } else if (group == "report") {
      known = sub == "runs";
      if (known) c.report_runs = split_list(v);
    } else {
      known = false;
    }
    if (!known) throw ConfigError(fmt::format("line {}: unknown key '{}'", kv.line, kv.key));
  }
  if (c.repeats < 1) throw ConfigError("repeats must be >= 1");
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::uint64_t RunConfig::repeat_seed(int r) const noexcept {
  return derive_seed(seed, "repeat", static_cast<std::uint64_t>(r));
}

ExitCode exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::Config;
  if (dynamic_cast<const DivergenceError*>(&e)) return ExitCode::Divergence;
  if (dynamic_cast<const DataError*>(&e)) return ExitCode::Data;
  return ExitCode::Failure;
}

// ------------------------------------------------------------------ reports

std::string method_family(std::string_view method) {
  if (method.starts_with("rf") || method.starts_with("mlp")) return "ml";
  if (method.starts_with("bamcd")) return "dl";
  return "indices";
}

std::vector<ReportRow> summarize_repeats(const std::string& method, const std::string& family, std::uint64_t root_seed,
                                         const std::vector<ReportRow>& repeats) {
  std::vector<ReportRow> out = repeats;
  if (repeats.empty()) return out;
  const std::size_t k = repeats[0].values.size();
  const double n = static_cast<double>(repeats.size());
  ReportRow mean{method, family, "mean", root_seed, std::vector<double>(k, 0.0)};
  ReportRow sd{method, family, "std", root_seed, std::vector<double>(k, 0.0)};
  for (const auto& r : repeats) {
    for (std::size_t i = 0; i < k; ++i) mean.values[i] += r.values[i];
  }
  for (auto& v : mean.values) v /= n;
  if (repeats.size() > 1) {
    for (const auto& r : repeats) {
      for (std::size_t i = 0; i < k; ++i) sd.values[i] += (r.values[i] - mean.values[i]) * (r.values[i] - mean.values[i]);
    }
    for (auto& v : sd.values) v = std::sqrt(v / (n - 1.0));
  }
  out.push_back(std::move(mean));
  out.push_back(std::move(sd));
  return out;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string s = fmt::format("method,family,repeat,seed,{}\n", fmt::join(metric_columns(), ","));
  for (const auto& r : rows) {
    s += fmt::format("{},{},{},{}", r.method, r.family, r.repeat, r.seed);
    for (double v : r.values) s += fmt::format(",{:.9f}", v);
    s += '\n';
  }
  return s;
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  const std::size_t k = metric_columns().size();
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (!line.starts_with("method,family,repeat,seed,")) throw FormatError("report: unexpected header", 0);
      header = false;
      continue;
    }
    const auto f = split_list(line);
    if (f.size() != 4 + k) throw FormatError(fmt::format("report: row has {} fields, expected {}", f.size(), 4 + k), 0);
    ReportRow r{f[0], f[1], f[2], 0, {}};
    try {
      r.seed = parse_u64("seed", f[3]);
      for (std::size_t i = 0; i < k; ++i) r.values.push_back(parse_f64(metric_columns()[i], f[4 + i]));
    } catch (const ConfigError& e) {
      throw FormatError(fmt::format("report: {}", e.what()), 0);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void sort_report_rows(std::vector<ReportRow>& rows) {
  const auto rank = [](const std::string& f) { return f == "indices" ? 0 : f == "ml" ? 1 : f == "dl" ? 2 : 3; };
  const auto order = [](const std::string& r) { return r == "mean" ? 1 : r == "std" ? 2 : 0; };
  std::stable_sort(rows.begin(), rows.end(), [&](const ReportRow& a, const ReportRow& b) {
    return std::tuple(rank(a.family), a.method, a.seed, order(a.repeat), a.repeat) <
           std::tuple(rank(b.family), b.method, b.seed, order(b.repeat), b.repeat);
  });
}

std::string report_table(const std::vector<ReportRow>& rows) {
  static const std::vector<std::string> header = {"Method", "U-P", "U-R", "U-F1", "U-IoU", "B-P", "B-R",
                                                  "B-F1", "B-IoU", "mF1", "mIoU"};
  std::vector<const ReportRow*> means;
  std::map<std::pair<std::string, std::uint64_t>, const ReportRow*> stds;
  for (const auto& r : rows) {
    if (r.repeat == "mean") means.push_back(&r);
    if (r.repeat == "std") stds[{r.method, r.seed}] = &r;
  }
  constexpr std::size_t kF1 = 8, kIoU = 9;
  double best_f1 = -1.0, best_iou = -1.0;
  for (const auto* m : means) {
    best_f1 = std::max(best_f1, m->values[kF1]);
    best_iou = std::max(best_iou, m->values[kIoU]);
  }
  std::vector<std::vector<std::string>> cells{header};
  for (const auto* m : means) {
    const auto it = stds.find({m->method, m->seed});
    const ReportRow* sd = it == stds.end() ? nullptr : it->second;
    std::vector<std::string> line{m->method};
    for (std::size_t i = 0; i < m->values.size(); ++i) {
      std::string cell = fmt::format("{:.2f}", 100.0 * m->values[i]);
      if (sd && sd->values[i] > 0.0) cell += fmt::format(" ({:.2f})", 100.0 * sd->values[i]);
      if ((i == kF1 && m->values[i] == best_f1) || (i == kIoU && m->values[i] == best_iou)) cell += " *";
      line.push_back(std::move(cell));
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string s;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      s += i == 0 ? fmt::format("{:<{}}", line[i], width[i]) : fmt::format("  {:>{}}", line[i], width[i]);
    }
    s += '\n';
  }
  return s;
}

// ------------------------------------------------------------------ commands

namespace {

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError(fmt::format("write to '{}' failed", path.string()));
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
}

void write_report(const fs::path& out, const std::vector<ReportRow>& rows) {
  write_text(out / "report.csv", report_csv(rows));
  write_text(out / "report.txt", report_table(rows));
}

DatasetManifest load_manifest(const RunConfig& c) {
  if (c.manifest.empty()) throw ConfigError("no manifest configured (key 'manifest')");
  return read_manifest(c.manifest);
}

std::vector<BitemporalSample> load_split_checked(const DatasetManifest& m, Split split) {
  auto samples = m.load_split(split);
  if (samples.empty()) throw DataError(fmt::format("manifest has no {} patches", split_name(split)));
  return samples;
}

ReportRow metrics_row(const std::string& method, std::string_view repeat, std::uint64_t seed,
                      const ConfusionCounts& counts) {
  return {method, method_family(method), std::string(repeat), seed, metric_values(compute_metrics(counts))};
}

std::vector<float> read_raw_f32(const std::string& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path));
  std::vector<float> v(count);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float) || in.peek() != EOF) {
    throw DataError(fmt::format("'{}' must hold exactly {} float32 values", path, count));
  }
  return v;
}

BinaryMask read_raw_mask(const std::string& path, std::size_t h, std::size_t w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path));
  BinaryMask m(h, w);
  in.read(reinterpret_cast<char*>(m.labels.data()), static_cast<std::streamsize>(h * w));
  if (static_cast<std::size_t>(in.gcount()) != h * w || in.peek() != EOF) {
    throw DataError(fmt::format("'{}' must hold exactly {} bytes", path, h * w));
  }
  for (auto& v : m.labels) v = v != 0;
  return m;
}

ConfusionCounts dense_counts(const FeatureDataset& data, const std::vector<double>& probability) {
  std::vector<std::uint8_t> pred(probability.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = probability[i] >= 0.5 ? 1 : 0;
  return accumulate(pred, data.matrix.labels);
}

}  // namespace

DatasetManifest cmd_synth(const RunConfig& c, const fs::path& out) {
  SyntheticDatasetConfig dc = c.synth;
  if (!c.synth_explicit_splits) {
    if (c.synth_events == 0) throw ConfigError("synth.events must be positive");
    const auto s = split_counts(c.synth_events);
    dc.train_patches = s.train;
    dc.val_patches = s.val;
    dc.test_patches = s.test;
  }
  dc.patch.validate();
  prepare_dir(out / "patches");
  const auto samples = generate_synthetic_dataset(c.seed, dc);
  DatasetManifest m;
  m.clip_max = dc.patch.clip_max;
  m.patch_size = dc.patch.patch_size;
  m.root = out;
  for (const auto& s : samples) {
    const std::string rel = fmt::format("patches/{}.flg", s.event_id);
    write_patch_file(s, out / rel);
    m.entries.push_back({s.event_id, s.split, rel, s.truth.count()});
  }
  write_manifest(m, out / "manifest.csv");
  return m;
}

DatasetManifest cmd_ingest(const RunConfig& c, const fs::path& out) {
  const auto& s = c.ingest;
  if (s.pre.empty() || s.post.empty() || s.truth.empty()) {
    throw ConfigError("ingest needs ingest.pre, ingest.post and ingest.truth");
  }
  if (s.height == 0 || s.width == 0) throw ConfigError("ingest needs positive ingest.height and ingest.width");
  if (s.patch_size == 0 || s.patch_size > 65535) throw ConfigError("ingest.patch_size must be in 1..65535");
  if (s.event_id.empty() || s.event_id.find_first_of(",/\\") != std::string::npos) {
    throw ConfigError("ingest.event_id must be non-empty without ',', '/' or '\\'");
  }
  const std::size_t n = s.bands.size() * s.height * s.width;
  const RasterPatch pre(s.height, s.width, s.bands, read_raw_f32(s.pre, n));
  const RasterPatch post(s.height, s.width, s.bands, read_raw_f32(s.post, n));
  const BinaryMask truth = read_raw_mask(s.truth, s.height, s.width);
  std::optional<BinaryMask> water;
  if (!s.water.empty()) water = read_raw_mask(s.water, s.height, s.width);
  const auto tiles = ingest_scene(pre, post, truth, water, s.patch_size, s.clip_max, s.event_id, s.split);

  prepare_dir(out / "patches");
  DatasetManifest m;
  const fs::path manifest_path = out / "manifest.csv";
  if (fs::exists(manifest_path)) {
    m = read_manifest(manifest_path);
    if (m.patch_size != s.patch_size || m.clip_max != s.clip_max) {
      throw DataError(fmt::format("existing manifest uses patch_size {} / clip_max {}", m.patch_size, m.clip_max));
    }
  } else {
    m.patch_size = s.patch_size;
    m.clip_max = s.clip_max;
  }
  m.root = out;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::string rel = fmt::format("patches/{}-{:04d}.flg", s.event_id, i);
    if (std::any_of(m.entries.begin(), m.entries.end(), [&](const ManifestEntry& e) { return e.path == rel; })) {
      throw DataError(fmt::format("manifest already lists '{}'", rel));
    }
    write_patch_file(tiles[i], out / rel);
    m.entries.push_back({s.event_id, s.split, rel, tiles[i].truth.count()});
  }
  write_manifest(m, manifest_path);
  return m;
}

std::vector<ReportRow> cmd_index_eval(const RunConfig& c, const fs::path& out) {
  if (c.method.empty()) throw ConfigError("index-eval needs 'method' set to an index name");
  // "dNBR" names the delta of NBR; the bare index name means the same.
  const bool delta_prefix = c.method.size() > 1 && (c.method[0] == 'd' || c.method[0] == 'D');
  const IndexKind kind = delta_prefix ? parse_index(std::string_view(c.method).substr(1)) : parse_index(c.method);
  const auto manifest = load_manifest(c);
  const auto train = load_split_checked(manifest, Split::Train);
  const auto test = load_split_checked(manifest, Split::Test);
  const auto model = fit_threshold(kind, train, c.threshold_steps);
  const auto counts = threshold_counts(pool_change_pixels(kind, test), model.threshold);
  const std::string method = is_bitemporal(kind) ? std::string(index_name(kind)) : fmt::format("d{}", index_name(kind));
  // Thresholding is deterministic, so every repeat reproduces the same row.
  std::vector<ReportRow> repeats;
  for (int r = 0; r < c.repeats; ++r) repeats.push_back(metrics_row(method, std::to_string(r), c.repeat_seed(r), counts));
  const auto rows = summarize_repeats(method, "indices", c.seed, repeats);
  prepare_dir(out);
  write_text(out / "threshold_model.txt", model.serialize());
  write_report(out, rows);
  return rows;
}

std::vector<ReportRow> cmd_ml_run(const RunConfig& c, const fs::path& out) {
  if (c.method != "rf" && c.method != "mlp") throw ConfigError("ml-run needs method = rf or mlp");
  c.rf.validate();
  c.mlp.validate();
  const auto manifest = load_manifest(c);
  const auto train = load_split_checked(manifest, Split::Train);
  const auto test = load_split_checked(manifest, Split::Test);
  const auto all = make_all_schema(train[0].pre.bands());
  const std::string method = fmt::format("{}-{}", c.method, schema_variant_name(c.schema));

  std::vector<ReportRow> repeats;
  FeatureSchema schema = c.schema == SchemaVariant::DSI ? make_dsi_schema() : all;
  std::vector<double> mi_importances;
  if (c.schema == SchemaVariant::MI && !c.mi_model.empty()) mi_importances = load_forest(c.mi_model).feature_importances;

  prepare_dir(out);
  for (int r = 0; r < c.repeats; ++r) {
    const std::uint64_t seed = c.repeat_seed(r);
    const auto sampling = sample_pixels(train, c.sample_size, derive_seed(seed, "pixel-sampling"));
    if (c.schema == SchemaVariant::MI) {
      auto importances = mi_importances;
      if (importances.empty()) {
        const auto data = assemble_dataset(all, train, sampling);
        importances = rf_fit(data.matrix, c.rf, derive_seed(seed, "mi-forest")).feature_importances;
      }
      schema = derive_mi_schema(all, importances, c.mi_cutoff);
      if (schema.entries.empty()) throw DataError(fmt::format("no feature has importance > {}", c.mi_cutoff));
    }
    const auto data = assemble_dataset(schema, train, sampling);
    const auto dense = assemble_dense(schema, test);
    const fs::path dir = out / fmt::format("repeat-{}", r);
    prepare_dir(dir);
    std::vector<double> prob;
    if (c.method == "rf") {
      const auto model = rf_fit(data.matrix, c.rf, derive_seed(seed, "rf"));
      prob = predict_rows(model, dense.matrix);
      save_forest(model, dir / "model.flgm");
    } else {
      const auto fit = mlp_fit(data.matrix, c.mlp, derive_seed(seed, "mlp"));
      prob = predict_rows(fit.model, dense.matrix);
      save_mlp(fit.model, dir / "model.flgm");
      std::string trace = "epoch,train_loss\n";
      for (std::size_t e = 0; e < fit.loss_trace.size(); ++e) trace += fmt::format("{},{:.9g}\n", e + 1, fit.loss_trace[e]);
      write_text(dir / "trace.csv", trace);
    }
    write_text(dir / "schema.txt", schema.serialize() + "\n");
    if (c.write_features) write_feature_csv(data, dir / "features.csv");
    repeats.push_back(metrics_row(method, std::to_string(r), seed, dense_counts(dense, prob)));
  }
  const auto rows = summarize_repeats(method, "ml", c.seed, repeats);
  write_report(out, rows);
  return rows;
}

std::vector<ReportRow> cmd_dl_run(const RunConfig& c, const fs::path& out) {
  c.bamcd.validate();
  const auto manifest = load_manifest(c);
  const auto train_set = load_split_checked(manifest, Split::Train);
  const auto val_set = load_split_checked(manifest, Split::Val);
  const auto test_set = load_split_checked(manifest, Split::Test);
  const std::string method = fmt::format("bamcd-{}", sharing_name(c.bamcd.sharing));
  std::vector<ReportRow> repeats;
  prepare_dir(out);
  for (int r = 0; r < c.repeats; ++r) {
    BamCdConfig cfg = c.bamcd;
    cfg.seed = c.repeat_seed(r);
    const auto result = train(build(cfg), train_set, val_set);
    const fs::path dir = out / fmt::format("repeat-{}", r);
    prepare_dir(dir);
    save_bamcd(result.model, dir / "checkpoint.flgm");
    write_text(dir / "trace.csv", trace_csv(result.trace));
    repeats.push_back(metrics_row(method, std::to_string(r), cfg.seed, evaluate(result.model, test_set)));
  }
  const auto rows = summarize_repeats(method, "dl", c.seed, repeats);
  write_report(out, rows);
  return rows;
}

std::vector<ReportRow> cmd_report(const std::vector<fs::path>& runs, const fs::path& out) {
  std::vector<ReportRow> merged;
  for (const auto& dir : runs) {
    std::ifstream in(dir / "report.csv", std::ios::binary);
    if (!in) throw DataError(fmt::format("no report.csv in '{}'", dir.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    for (auto& row : parse_report_csv(ss.str())) {
      if (row.repeat == "mean" || row.repeat == "std") merged.push_back(std::move(row));
    }
  }
  sort_report_rows(merged);
  prepare_dir(out);
  write_text(out / "summary.csv", report_csv(merged));
  write_text(out / "summary.txt", report_table(merged));
  return merged;
}

}  // namespace burnscar
