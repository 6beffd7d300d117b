#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "burnscar/bamcd.hpp"
#include "burnscar/classical.hpp"
#include "burnscar/features.hpp"
#include "burnscar/patch_io.hpp"
#include "burnscar/synthetic.hpp"

namespace burnscar {

/// A scene given as raw little-endian arrays: f32 [band][row][col] reflectance for
/// each epoch, u8 [row][col] truth and optional u8 water mask.
struct IngestSettings {
  std::string pre;
  std::string post;
  std::string truth;
  std::string water;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<BandId> bands = all_bands();
  std::size_t patch_size = 256;
  float clip_max = 1.0f;
  std::string event_id = "scene";
  Split split = Split::Train;
};

/// Settings of one CLI run, read from a key=value file. Unknown keys are rejected.
struct RunConfig {
  std::string manifest;
  /// Index name (NBR, MIRBI, ...), rf, mlp or bamcd.
  std::string method;
  std::uint64_t seed = 0;
  int repeats = 1;
  std::string out;

  SyntheticDatasetConfig synth;
  /// Event count split 60/20/20 when the explicit split sizes are not given.
  std::size_t synth_events = 50;
  bool synth_explicit_splits = false;

  IngestSettings ingest;

  int threshold_steps = 256;

  SchemaVariant schema = SchemaVariant::All;
  std::size_t sample_size = 2000;
  double mi_cutoff = 0.01;
  /// RF model trained on the All schema whose importances define the MI schema. When
  /// empty, an All-schema forest is fitted on the run's own sample.
  std::string mi_model;
  bool write_features = true;
  ForestParams rf;
  MlpParams mlp;

  BamCdConfig bamcd = BamCdConfig::mini();

  std::vector<std::string> report_runs;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  /// Seed of repeat r, derived from the root seed.
  std::uint64_t repeat_seed(int r) const noexcept;
};

/// Process exit codes.
enum class ExitCode : int { Ok = 0, Failure = 1, Config = 2, Data = 3, Divergence = 4 };
ExitCode exit_code_for(const std::exception& e) noexcept;

/// One line of a run report: a repeat ("0", "1", ...) or the "mean"/"std" summary.
struct ReportRow {
  std::string method;
  std::string family;  ///< indices, ml or dl
  std::string repeat;
  std::uint64_t seed = 0;
  std::vector<double> values;  ///< metric_values() order

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// Per-repeat rows followed by mean and sample standard deviation rows.
std::vector<ReportRow> summarize_repeats(const std::string& method, const std::string& family,
                                         std::uint64_t root_seed, const std::vector<ReportRow>& repeats);

std::string report_csv(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(std::string_view text);

/// Aligned plain-text table of mean rows in percent, standard deviation in parentheses.
/// Rows whose mean F1 or mean IoU is the best are marked with '*'.
std::string report_table(const std::vector<ReportRow>& rows);

/// Family order indices < ml < dl, then method name, then seed.
void sort_report_rows(std::vector<ReportRow>& rows);

std::string method_family(std::string_view method);

// Commands. Each writes its primary outputs under `out` (created if needed) and
// returns what it wrote to the report, if anything.

DatasetManifest cmd_synth(const RunConfig& config, const std::filesystem::path& out);
DatasetManifest cmd_ingest(const RunConfig& config, const std::filesystem::path& out);
std::vector<ReportRow> cmd_index_eval(const RunConfig& config, const std::filesystem::path& out);
std::vector<ReportRow> cmd_ml_run(const RunConfig& config, const std::filesystem::path& out);
std::vector<ReportRow> cmd_dl_run(const RunConfig& config, const std::filesystem::path& out);
/// Merges the mean/std rows of every run directory's report.csv.
std::vector<ReportRow> cmd_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out);

}  // namespace burnscar
