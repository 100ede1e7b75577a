#include "gscg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

namespace gscg {

namespace {

int sorted_index(const std::vector<std::string>& v, std::string_view key) {
  auto it = std::lower_bound(v.begin(), v.end(), key,
                             [](const std::string& a, std::string_view b) { return a < b; });
  return it != v.end() && *it == key ? static_cast<int>(it - v.begin()) : -1;
}

}  // namespace

int Vocab::class_index(std::string_view label) const { return sorted_index(classes, label); }

int Vocab::material_index(std::string_view material) const {
  return sorted_index(materials, material);
}

nlohmann::json Vocab::to_json() const { return {{"classes", classes}, {"materials", materials}}; }

Vocab Vocab::from_json(const nlohmann::json& doc) {
  Vocab v;
  v.classes = doc.at("classes").get<std::vector<std::string>>();
  v.materials = doc.at("materials").get<std::vector<std::string>>();
  if (!std::is_sorted(v.classes.begin(), v.classes.end()) ||
      !std::is_sorted(v.materials.begin(), v.materials.end()))
    throw std::runtime_error("vocabulary must be sorted");
  return v;
}

Vocab Dataset::vocab() const {
  std::set<std::string> classes, materials;
  for (const auto& g : graphs)
    for (const auto& [id, n] : g.nodes) {
      if (n.label) classes.insert(*n.label);
      for (const auto& m : n.materials) materials.insert(m.material);
    }
  for (const auto* split : {&train, &val, &test})
    for (const auto& s : *split) classes.insert(s.label);
  return {{classes.begin(), classes.end()}, {materials.begin(), materials.end()}};
}

Dataset load_dataset(const std::filesystem::path& path, std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open dataset");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  if (doc.value("format_version", 0) != kDatasetFormatVersion)
    throw std::runtime_error(path.string() + ": unsupported format_version");
  const auto base = path.parent_path();
  Dataset data;
  std::map<std::string, std::size_t> graph_index;
  std::vector<Sample> unsplit;
  const auto& samples = doc.at("samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& js = samples[i];
    const std::string where = path.string() + ": samples[" + std::to_string(i) + "]";
    if (!js.contains("graph") || !js.contains("target") || !js.contains("label"))
      throw std::runtime_error(where + ": expected graph, target and label");
    const std::string ref = js["graph"].get<std::string>();
    auto it = graph_index.find(ref);
    if (it == graph_index.end()) {
      data.graphs.push_back(read_graph(base / ref));
      it = graph_index.emplace(ref, data.graphs.size() - 1).first;
    }
    Sample s{it->second, js["target"].get<int>(), js["label"].get<std::string>()};
    if (!data.graphs[s.graph].nodes.count(s.target))
      throw std::runtime_error(where + ": target " + std::to_string(s.target) + " not in " + ref);
    const std::string split = js.value("split", "");
    if (split == "train") data.train.push_back(std::move(s));
    else if (split == "val") data.val.push_back(std::move(s));
    else if (split == "test") data.test.push_back(std::move(s));
    else if (split.empty()) unsplit.push_back(std::move(s));
    else throw std::runtime_error(where + ": unknown split '" + split + "'");
  }
  if (!unsplit.empty()) {
    std::mt19937_64 rng(split_seed);
    for (std::size_t i = unsplit.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 *
                                              static_cast<double>(i + 1));
      std::swap(unsplit[i], unsplit[std::min(i, j)]);
    }
    const std::size_t n_train = unsplit.size() * 4 / 5;
    for (std::size_t i = 0; i < unsplit.size(); ++i)
      (i < n_train ? data.train : data.val).push_back(std::move(unsplit[i]));
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "graphs");
  std::vector<std::string> refs(data.graphs.size());
  for (std::size_t i = 0; i < data.graphs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "graphs/%06zu.json", i);
    refs[i] = name;
    write_graph(data.graphs[i], dir / refs[i]);
  }
  nlohmann::json samples = nlohmann::json::array();
  auto emit = [&](const std::vector<Sample>& split, const char* name) {
    for (const auto& s : split)
      samples.push_back(
          {{"graph", refs.at(s.graph)}, {"target", s.target}, {"label", s.label}, {"split", name}});
  };
  emit(data.train, "train");
  emit(data.val, "val");
  emit(data.test, "test");
  std::ofstream out(dir / "dataset.json");
  if (!out) throw std::runtime_error((dir / "dataset.json").string() + ": cannot open for writing");
  out << nlohmann::json{{"format_version", kDatasetFormatVersion}, {"samples", samples}}.dump(1)
      << "\n";
}

}  // namespace gscg
