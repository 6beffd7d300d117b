// Command-line front-end: burnscar <synth|ingest|index-eval|ml-run|dl-run|report> [flags]

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "burnscar/error.hpp"
#include "burnscar/pipeline.hpp"

namespace fs = std::filesystem;
using namespace burnscar;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::vector<std::string> runs;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.repeats) {
    if (*o.repeats < 1) throw ConfigError("--repeats must be >= 1");
    c.repeats = *o.repeats;
  }
  if (!o.out.empty()) c.out = o.out;
  if (c.out.empty()) throw ConfigError("no output directory (pass --out or set 'out')");
  // Relative manifest paths in a config file are taken relative to that file.
  if (!o.config.empty() && !c.manifest.empty() && fs::path(c.manifest).is_relative()) {
    c.manifest = (fs::path(o.config).parent_path() / c.manifest).lexically_normal().string();
  }
  return c;
}

void print_rows(const std::vector<ReportRow>& rows) { std::fputs(report_table(rows).c_str(), stdout); }

int run(const std::string& command, const Options& o) {
  if (command == "report") {
    RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
    std::vector<fs::path> runs(o.runs.begin(), o.runs.end());
    if (runs.empty()) runs.assign(c.report_runs.begin(), c.report_runs.end());
    const fs::path out = o.out.empty() ? fs::path(c.out) : fs::path(o.out);
    if (out.empty()) throw ConfigError("no output directory (pass --out or set 'out')");
    print_rows(cmd_report(runs, out));
    return 0;
  }
  const RunConfig c = resolve(o);
  if (command == "synth") {
    const auto m = cmd_synth(c, c.out);
    fmt::print("wrote {} patches to {}\n", m.entries.size(), (fs::path(c.out) / "manifest.csv").string());
  } else if (command == "ingest") {
    const auto m = cmd_ingest(c, c.out);
    fmt::print("manifest {} now lists {} patches\n", (fs::path(c.out) / "manifest.csv").string(), m.entries.size());
  } else if (command == "index-eval") {
    print_rows(cmd_index_eval(c, c.out));
  } else if (command == "ml-run") {
    print_rows(cmd_ml_run(c, c.out));
  } else if (command == "dl-run") {
    print_rows(cmd_dl_run(c, c.out));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Burnt-area mapping: spectral indices, classical learners and BAM-CD"};
  app.require_subcommand(1, 1);
  Options o;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "key=value run configuration")->check(CLI::ExistingFile);
    sub->add_option("-o,--out", o.out, "output directory (overrides 'out')");
    sub->add_option("--seed", o.seed, "root seed (overrides 'seed')");
  };
  const auto add_repeats = [&](CLI::App* sub) {
    sub->add_option("--repeats", o.repeats, "repeat count (overrides 'repeats')");
  };

  add_common(app.add_subcommand("synth", "generate a synthetic bitemporal dataset"));
  add_common(app.add_subcommand("ingest", "tile a raw scene into patches and append to a manifest"));
  for (const auto& [name, help] : {std::pair{"index-eval", "fit and test a spectral-index threshold"},
                                   std::pair{"ml-run", "train and test a random forest or MLP"},
                                   std::pair{"dl-run", "train and test BAM-CD"}}) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    add_repeats(sub);
  }
  auto* report = app.add_subcommand("report", "merge run reports into one table");
  report->add_option("-c,--config", o.config, "key=value configuration with report.runs")->check(CLI::ExistingFile);
  report->add_option("-o,--out", o.out, "output directory");
  report->add_option("runs", o.runs, "run directories holding report.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::Config);
  }

  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const std::exception& e) {
    fmt::print(stderr, "burnscar: error: {}\n", e.what());
    return static_cast<int>(exit_code_for(e));
  }
}
