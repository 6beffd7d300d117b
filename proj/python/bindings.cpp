#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "burnscar/bamcd.hpp"
#include "burnscar/error.hpp"
#include "burnscar/metrics.hpp"
#include "burnscar/pipeline.hpp"
#include "burnscar/spectral.hpp"
#include "burnscar/synthetic.hpp"
#include "burnscar/threshold.hpp"

namespace py = pybind11;
using namespace burnscar;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

std::vector<BandId> band_list(const std::optional<std::vector<std::string>>& names, std::size_t channels) {
  if (!names) {
    if (channels != kBandCount) {
      throw DataError("a cube without band names must have the ten default bands");
    }
    return all_bands();
  }
  std::vector<BandId> out;
  for (const auto& n : *names) out.push_back(parse_band(n));
  if (out.size() != channels) throw ShapeError("band name count differs from the cube's channel count");
  return out;
}

RasterPatch to_patch(const FloatArray& cube, const std::optional<std::vector<std::string>>& bands) {
  if (cube.ndim() != 3) throw ShapeError("expected a [bands, height, width] array");
  const auto c = static_cast<std::size_t>(cube.shape(0));
  const auto h = static_cast<std::size_t>(cube.shape(1));
  const auto w = static_cast<std::size_t>(cube.shape(2));
  return RasterPatch(h, w, band_list(bands, c), std::vector<float>(cube.data(), cube.data() + cube.size()));
}

FloatArray to_array(const RasterPatch& p) {
  FloatArray a({p.bands().size(), p.height(), p.width()});
  std::copy(p.data().begin(), p.data().end(), a.mutable_data());
  return a;
}

FloatArray to_array(const ScalarField& f) {
  FloatArray a({f.height, f.width});
  std::copy(f.values.begin(), f.values.end(), a.mutable_data());
  return a;
}

MaskArray to_array(const BinaryMask& m) {
  MaskArray a({m.height, m.width});
  std::copy(m.labels.begin(), m.labels.end(), a.mutable_data());
  return a;
}

py::dict class_dict(const ClassMetrics& m) {
  py::dict d;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["iou"] = m.iou;
  return d;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  const auto values = metric_values(r);
  for (std::size_t i = 0; i < values.size(); ++i) d[py::str(metric_columns()[i])] = values[i];
  return d;
}

py::list rows_list(const std::vector<ReportRow>& rows) {
  py::list out;
  for (const auto& r : rows) {
    py::dict d;
    d["method"] = r.method;
    d["family"] = r.family;
    d["repeat"] = r.repeat;
    d["seed"] = r.seed;
    for (std::size_t i = 0; i < r.values.size(); ++i) d[py::str(metric_columns()[i])] = r.values[i];
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Burnt-area mapping from bitemporal Sentinel-2 patches";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  m.def("index_names", [] {
    std::vector<std::string> out;
    for (IndexKind k : all_index_kinds()) out.emplace_back(index_name(k));
    return out;
  });
  m.def(
      "compute_index",
      [](const std::string& name, const FloatArray& cube, std::optional<std::vector<std::string>> bands) {
        return to_array(compute_index(parse_index(name), to_patch(cube, bands)));
      },
      py::arg("name"), py::arg("cube"), py::arg("bands") = py::none(),
      "Unitemporal index of a [bands, H, W] cube.");
  m.def(
      "compute_change",
      [](const std::string& name, const FloatArray& pre, const FloatArray& post,
         std::optional<std::vector<std::string>> bands) {
        return to_array(compute_change(parse_index(name), to_patch(pre, bands), to_patch(post, bands)));
      },
      py::arg("name"), py::arg("pre"), py::arg("post"), py::arg("bands") = py::none(),
      "Pre-minus-post delta, or RDNBR/RBR themselves.");

  m.def(
      "class_metrics",
      [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
        return class_dict(class_metrics(ConfusionCounts{tp, fp, fn, tn}));
      },
      py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn") = 0);
  m.def(
      "compute_metrics",
      [](const MaskArray& prediction, const MaskArray& truth) {
        if (prediction.size() != truth.size()) throw ShapeError("prediction and truth sizes differ");
        const std::vector<std::uint8_t> p(prediction.data(), prediction.data() + prediction.size());
        const std::vector<std::uint8_t> t(truth.data(), truth.data() + truth.size());
        return report_dict(burnscar::compute_metrics(burnscar::accumulate(p, t)));
      },
      py::arg("prediction"), py::arg("truth"), "Ten-column report of binary burnt masks.");

  py::class_<BitemporalSample>(m, "Sample")
      .def_readonly("event_id", &BitemporalSample::event_id)
      .def_property_readonly("split", [](const BitemporalSample& s) { return std::string(split_name(s.split)); })
      .def_property_readonly("pre", [](const BitemporalSample& s) { return to_array(s.pre); })
      .def_property_readonly("post", [](const BitemporalSample& s) { return to_array(s.post); })
      .def_property_readonly("truth", [](const BitemporalSample& s) { return to_array(s.truth); })
      .def_property_readonly("bands", [](const BitemporalSample& s) {
        std::vector<std::string> out;
        for (BandId b : s.pre.bands()) out.emplace_back(band_name(b));
        return out;
      });

  m.def(
      "synthetic_dataset",
      [](std::uint64_t seed, std::size_t train, std::size_t val, std::size_t test, std::size_t patch_size,
         double noise, double water_probability) {
        SyntheticDatasetConfig cfg;
        cfg.train_patches = train;
        cfg.val_patches = val;
        cfg.test_patches = test;
        cfg.patch.patch_size = patch_size;
        cfg.patch.noise = noise;
        cfg.patch.water_probability = water_probability;
        return generate_synthetic_dataset(seed, cfg);
      },
      py::arg("seed"), py::arg("train") = 40, py::arg("val") = 10, py::arg("test") = 10, py::arg("patch_size") = 64,
      py::arg("noise") = 0.0, py::arg("water_probability") = 0.0);

  m.def(
      "fit_threshold",
      [](const std::string& name, const std::vector<BitemporalSample>& train, int steps) {
        const auto model = fit_threshold(parse_index(name), train, steps);
        return py::make_tuple(model.threshold, model.train_f1);
      },
      py::arg("name"), py::arg("train"), py::arg("steps") = 256, "Returns (threshold, train F1).");
  m.def(
      "evaluate_threshold",
      [](const std::string& name, const std::vector<BitemporalSample>& samples, double threshold) {
        const IndexKind kind = parse_index(name);
        return report_dict(compute_metrics(threshold_counts(pool_change_pixels(kind, samples), threshold)));
      },
      py::arg("name"), py::arg("samples"), py::arg("threshold"));

  m.def(
      "bamcd_parameter_count",
      [](const std::string& profile, const std::map<std::string, std::string>& overrides) {
        if (profile != "mini" && profile != "paper_like") throw ConfigError("profile must be mini or paper_like");
        BamCdConfig cfg = profile == "paper_like" ? BamCdConfig::paper_like() : BamCdConfig::mini();
        for (const auto& [k, v] : overrides) {
          if (!cfg.set(k, v)) throw ConfigError("unknown bamcd key '" + k + "'");
        }
        cfg.validate();
        return count_parameters(cfg);
      },
      py::arg("profile") = "mini", py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "run",
      [](const std::string& command, const std::string& config, const std::filesystem::path& out) -> py::object {
        const RunConfig c = RunConfig::parse(config);
        std::optional<std::size_t> manifest_size;
        std::vector<ReportRow> rows;
        {
          py::gil_scoped_release release;
          if (command == "synth") {
            manifest_size = cmd_synth(c, out).entries.size();
          } else if (command == "ingest") {
            manifest_size = cmd_ingest(c, out).entries.size();
          } else if (command == "index-eval") {
            rows = cmd_index_eval(c, out);
          } else if (command == "ml-run") {
            rows = cmd_ml_run(c, out);
          } else if (command == "dl-run") {
            rows = cmd_dl_run(c, out);
          } else if (command == "report") {
            rows = cmd_report(std::vector<std::filesystem::path>(c.report_runs.begin(), c.report_runs.end()), out);
          } else {
            throw ConfigError("unknown command '" + command + "'");
          }
        }
        if (manifest_size) return py::int_(*manifest_size);
        return rows_list(rows);
      },
      py::arg("command"), py::arg("config"), py::arg("out"),
      "Runs a CLI command with key=value config text. synth/ingest return the manifest size, the others their "
      "report rows.");
}
