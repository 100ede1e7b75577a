#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gscg/classifier.hpp"
#include "gscg/color.hpp"
#include "gscg/describe.hpp"
#include "gscg/graph.hpp"
#include "gscg/synth.hpp"

namespace py = pybind11;
using namespace gscg;

namespace {

LabColor lab_of(const std::array<double, 3>& v) { return {v[0], v[1], v[2]}; }

std::array<double, 3> rgb_to_lab_py(int r, int g, int b) {
  for (int c : {r, g, b})
    if (c < 0 || c > 255) throw py::value_error("channel values must lie in 0..255");
  const LabColor lab = rgb_to_lab({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                   static_cast<std::uint8_t>(b)});
  return {lab.L, lab.a, lab.b};
}

std::vector<std::string> ablation_names() {
  std::vector<std::string> names;
  for (const auto& c : ablation_configs()) names.push_back(c.name);
  return names;
}

std::string synth_bundle(const std::string& spec_json, int index, const std::filesystem::path& dir) {
  const SynthSpec spec = SynthSpec::from_json(nlohmann::json::parse(spec_json));
  const SynthBundle b = gen_bundle(spec, scene_seed(spec, index));
  write_bundle(b.bundle, dir);
  return serialize(b.truth);
}

void synth_dataset(const std::string& spec_json, const std::filesystem::path& dir) {
  save_dataset(gen_graph_dataset(SynthSpec::from_json(nlohmann::json::parse(spec_json))), dir);
}

std::string train_and_evaluate(const std::filesystem::path& dataset, const std::string& config,
                               const std::string& train_json, const std::filesystem::path& checkpoint) {
  const auto doc = nlohmann::json::parse(train_json);
  TrainConfig t;
  t.lr = doc.value("lr", t.lr);
  t.weight_decay = doc.value("weight_decay", t.weight_decay);
  t.batch = doc.value("batch", t.batch);
  t.epochs = doc.value("epochs", t.epochs);
  t.patience = doc.value("patience", t.patience);
  t.seed = doc.value("seed", t.seed);
  t.workers = doc.value("workers", t.workers);
  const Dataset data = load_dataset(dataset, t.seed);
  const Vocab vocab = data.vocab();
  py::gil_scoped_release release;
  TrainResult r = train(data, data.train, data.val, vocab, ablation_config(config), t);
  if (!checkpoint.empty()) r.model.save(checkpoint);
  return evaluate(r.model, data, data.test.empty() ? data.val : data.test, t.workers, t.seed)
      .to_json()
      .dump();
}

std::vector<double> predict_proba(const std::filesystem::path& checkpoint, const std::string& graph_json,
                                  int target) {
  return Classifier::load(checkpoint).probabilities(deserialize(graph_json), target);
}

std::string riddle(const std::filesystem::path& checkpoint, const std::string& graph_json, int target,
                   std::uint64_t seed, const std::string& config) {
  return build_round(deserialize(graph_json), target, Classifier::load(checkpoint), seed,
                     ablation_config(config))
      .to_json()
      .dump();
}

}  // namespace

PYBIND11_MODULE(_gscg, m) {
  m.doc() = "Graph-based scene context toolkit";
  py::register_exception<GraphFormatError>(m, "GraphFormatError", PyExc_ValueError);
  py::register_exception<BundleError>(m, "BundleError", PyExc_ValueError);

  m.def("rgb_to_lab", &rgb_to_lab_py, py::arg("r"), py::arg("g"), py::arg("b"));
  m.def("ciede2000", [](const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return ciede2000(lab_of(a), lab_of(b));
  });
  m.def("color_name", [](const std::array<double, 3>& lab) { return name_color(lab_of(lab)); });
  m.def("build_graph", [](const std::filesystem::path& bundle) { return serialize(build_graph(load_bundle(bundle))); },
        py::arg("bundle_dir"));
  m.def("normalize_graph", [](const std::string& text) { return serialize(deserialize(text)); });
  m.def("describe", [](const std::string& graph_json, int target, const std::string& config) {
    return describe_object(deserialize(graph_json), target, ablation_config(config)).text;
  }, py::arg("graph_json"), py::arg("target"), py::arg("config") = "full_model");
  m.def("ablation_names", &ablation_names);
  m.def("synth_bundle", &synth_bundle, py::arg("spec_json"), py::arg("index"), py::arg("out_dir"));
  m.def("synth_dataset", &synth_dataset, py::arg("spec_json"), py::arg("out_dir"));
  m.def("train_and_evaluate", &train_and_evaluate, py::arg("dataset"), py::arg("config"),
        py::arg("train_json") = "{}", py::arg("checkpoint") = std::filesystem::path());
  m.def("predict_proba", &predict_proba, py::arg("checkpoint"), py::arg("graph_json"), py::arg("target"));
  m.def("riddle", &riddle, py::arg("checkpoint"), py::arg("graph_json"), py::arg("target"),
        py::arg("seed") = 0, py::arg("config") = "full_model");
  m.def("bootstrap_halfwidth", [](const std::vector<bool>& correct, int resamples, std::uint64_t seed) {
    return bootstrap_halfwidth(correct, resamples, seed);
  }, py::arg("correct"), py::arg("resamples") = kBootstrapSamples, py::arg("seed") = 0);
  m.def("format_accuracy", &format_accuracy);
}
