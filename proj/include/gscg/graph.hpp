#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gscg/color.hpp"
#include "gscg/pointcloud.hpp"
#include "gscg/scene_io.hpp"

namespace gscg {

class GraphFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MaterialPart {
  std::string material;
  double area_fraction = 0.0;
  std::vector<ColorShare> colors;
  friend bool operator==(const MaterialPart&, const MaterialPart&) = default;
};

struct ObjectNode {
  int id = 0;
  /// Absent when the label is masked.
  std::optional<std::string> label;
  GeometryAttributes geometry;
  std::vector<MaterialPart> materials;
  std::size_t point_count = 0;
  friend bool operator==(const ObjectNode&, const ObjectNode&) = default;
};

enum class EdgeKind { kTouch = 0, kNear = 1, kMixed = 2 };
inline constexpr int kNumEdgeKinds = 3;

const char* edge_kind_name(EdgeKind kind);
EdgeKind parse_edge_kind(std::string_view name);

struct Edge {
  int a = 0;  // a < b
  int b = 0;
  EdgeKind kind = EdgeKind::kNear;
  double weight = 0.0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct SceneMeta {
  std::string source;
  std::vector<std::string> classes;
  friend bool operator==(const SceneMeta&, const SceneMeta&) = default;
};

struct Gscg {
  std::map<int, ObjectNode> nodes;
  std::vector<Edge> edges;
  SceneMeta scene;

  const ObjectNode& node(int id) const;
  /// Throws GraphFormatError if an edge is dangling, self-looped or duplicated.
  void validate() const;

  friend bool operator==(const Gscg&, const Gscg&) = default;
};

inline constexpr std::size_t kMaxMaterialParts = 3;

struct NodeBuild {
  std::vector<ObjectNode> nodes;
  /// clouds[i] belongs to nodes[i].
  std::vector<InstanceCloud> clouds;
};

/// One node per instance that survives point-cloud filtering, in id order.
/// Material shares and colours use the same pixels as the cloud.
NodeBuild build_nodes(const SceneBundle& bundle);

struct TouchFraction {
  double b_near_a = 0.0;  // share of B's points within radius of some point of A
  double a_near_b = 0.0;
};

/// Brute-force nearest-neighbour test in both directions.
TouchFraction touch_fraction(std::span<const Vec3> a, std::span<const Vec3> b, double radius);
/// Uniform-grid accelerated variant; identical results to touch_fraction.
TouchFraction touch_fraction_grid(std::span<const Vec3> a, std::span<const Vec3> b, double radius);

struct EdgeOptions {
  double touch_radius = 0.05;
  double touch_threshold = 0.05;
  double near_distance = 1.0;
  bool use_grid = true;
};

/// Mean centroid distance over every unordered pair; 0 with fewer than two nodes.
double mean_centroid_distance(std::span<const Vec3> centroids);

/// Touch when max(b_near_a, a_near_b) > touch_threshold, near when the centroid
/// distance d <= near_distance with weight exp(-d / mean_d); both gives a mixed
/// edge weighted by the sum.
std::vector<Edge> build_edges(std::span<const ObjectNode> nodes,
                              std::span<const InstanceCloud> clouds,
                              const EdgeOptions& opts = {});

/// build_nodes followed by build_edges.
Gscg build_graph(const SceneBundle& bundle, const EdgeOptions& opts = {});

inline constexpr int kGraphFormatVersion = 1;

/// Versioned JSON with sorted keys and nodes in id order.
std::string serialize(const Gscg& graph, int indent = 1);
Gscg deserialize(std::string_view text);
Gscg read_graph(const std::filesystem::path& path);
void write_graph(const Gscg& graph, const std::filesystem::path& path);

struct Neighbor {
  const ObjectNode* node;
  Edge edge;
};

/// Throws std::out_of_range for an unknown node id.
std::vector<Neighbor> neighbors(const Gscg& graph, int node_id);
/// Labels of every node except `exclude` and nodes whose label is masked.
std::map<std::string, int> label_histogram(const Gscg& graph, int exclude);

}  // namespace gscg
