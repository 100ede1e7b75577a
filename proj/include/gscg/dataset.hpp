#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gscg/graph.hpp"
#include "json.hpp"

namespace gscg {

/// Label, class and material vocabularies, sorted.
struct Vocab {
  std::vector<std::string> classes;
  std::vector<std::string> materials;

  int class_index(std::string_view label) const;  // -1 when absent
  int material_index(std::string_view material) const;
  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& doc);
  friend bool operator==(const Vocab&, const Vocab&) = default;
};

struct Sample {
  std::size_t graph = 0;
  int target = 0;
  std::string label;
};

struct Dataset {
  std::vector<Gscg> graphs;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;

  /// Sorted union of node labels, target labels and material labels.
  Vocab vocab() const;
};

inline constexpr int kDatasetFormatVersion = 1;

/// Reads a dataset index: {"format_version", "samples": [{"graph", "target",
/// "label", "split"}]} where "graph" is a GSCG path relative to the index file.
/// Samples without a split are divided 80/20 into train/val by a seeded shuffle.
Dataset load_dataset(const std::filesystem::path& path, std::uint64_t split_seed = 0);

/// Writes graphs to <dir>/graphs/NNNNNN.json and the index to <dir>/dataset.json.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

}  // namespace gscg
