#include "gscg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace gscg {

using json = nlohmann::json;

const char* edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::kTouch: return "touch";
    case EdgeKind::kNear: return "near";
    case EdgeKind::kMixed: return "mixed";
  }
  return "?";
}

EdgeKind parse_edge_kind(std::string_view name) {
  if (name == "touch") return EdgeKind::kTouch;
  if (name == "near") return EdgeKind::kNear;
  if (name == "mixed") return EdgeKind::kMixed;
  throw GraphFormatError("unknown edge kind '" + std::string(name) + "'");
}

const ObjectNode& Gscg::node(int id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw std::out_of_range("unknown node id " + std::to_string(id));
  return it->second;
}

void Gscg::validate() const {
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    for (int end : {e.a, e.b})
      if (!nodes.contains(end))
        throw GraphFormatError("edges[" + std::to_string(i) + "]: references missing node " +
                               std::to_string(end));
    if (e.a == e.b)
      throw GraphFormatError("edges[" + std::to_string(i) + "]: self loop on node " +
                             std::to_string(e.a));
    if (!seen.insert({std::min(e.a, e.b), std::max(e.a, e.b)}).second)
      throw GraphFormatError("edges[" + std::to_string(i) + "]: duplicate edge " +
                             std::to_string(e.a) + "-" + std::to_string(e.b));
  }
  for (const auto& [id, n] : nodes)
    if (id != n.id) throw GraphFormatError("node key " + std::to_string(id) + " != node.id");
}

// ---------------------------------------------------------------------------
// Construction

NodeBuild build_nodes(const SceneBundle& bundle) {
  NodeBuild out;
  const std::size_t n_mat = bundle.material_vocab.size();
  for (int id : bundle.instance_ids()) {
    auto ext = extract_instance_cloud(bundle, id);
    if (!ext.cloud) continue;
    InstanceCloud& cloud = *ext.cloud;

    ObjectNode node;
    node.id = id;
    node.label = bundle.semantic_of_instance.at(id);
    node.geometry = pca_geometry(cloud);
    node.point_count = cloud.size();

    std::vector<std::vector<Rgb8>> by_material(n_mat);
    for (const auto& [u, v] : cloud.source_pixels)
      by_material[bundle.material_map.at(u, v)].push_back(bundle.rgb.at(u, v));
    std::vector<std::size_t> order;
    for (std::size_t m = 0; m < n_mat; ++m)
      if (!by_material[m].empty()) order.push_back(m);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return by_material[x].size() > by_material[y].size();
    });
    if (order.size() > kMaxMaterialParts) order.resize(kMaxMaterialParts);
    const double total = static_cast<double>(cloud.size());
    for (auto m : order) {
      MaterialPart part;
      part.material = bundle.material_vocab[m];
      part.area_fraction = static_cast<double>(by_material[m].size()) / total;
      part.colors = dominant_colors(by_material[m]);
      node.materials.push_back(std::move(part));
    }
    out.nodes.push_back(std::move(node));
    out.clouds.push_back(std::move(cloud));
  }
  return out;
}

namespace {

inline double sq_dist(const Vec3& p, const Vec3& q) {
  const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
  return dx * dx + dy * dy + dz * dz;
}

std::size_t count_near_brute(std::span<const Vec3> from, std::span<const Vec3> to, double r2) {
  std::size_t hits = 0;
  for (const auto& q : to) {
    for (const auto& p : from) {
      if (sq_dist(p, q) <= r2) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Cell size equals the radius, so any point within the radius lies in one of the
// 27 surrounding cells. The distance predicate is the same as the brute force.
std::size_t count_near_grid(std::span<const Vec3> from, std::span<const Vec3> to, double radius) {
  const double r2 = radius * radius;
  if (!(radius > 0.0)) return count_near_brute(from, to, r2);
  auto cell = [&](const Vec3& p) {
    return CellKey{static_cast<std::int64_t>(std::floor(p[0] / radius)),
                   static_cast<std::int64_t>(std::floor(p[1] / radius)),
                   static_cast<std::int64_t>(std::floor(p[2] / radius))};
  };
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
  grid.reserve(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) grid[cell(from[i])].push_back(i);

  std::size_t hits = 0;
  for (const auto& q : to) {
    const CellKey c = cell(q);
    bool found = false;
    for (int dx = -1; dx <= 1 && !found; ++dx)
      for (int dy = -1; dy <= 1 && !found; ++dy)
        for (int dz = -1; dz <= 1 && !found; ++dz) {
          auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (auto i : it->second)
            if (sq_dist(from[i], q) <= r2) {
              found = true;
              break;
            }
        }
    if (found) ++hits;
  }
  return hits;
}

double centroid_distance(const Vec3& a, const Vec3& b) { return std::sqrt(sq_dist(a, b)); }

}  // namespace

TouchFraction touch_fraction(std::span<const Vec3> a, std::span<const Vec3> b, double radius) {
  if (a.empty() || b.empty()) throw std::invalid_argument("touch_fraction: empty cloud");
  const double r2 = radius * radius;
  return {static_cast<double>(count_near_brute(a, b, r2)) / static_cast<double>(b.size()),
          static_cast<double>(count_near_brute(b, a, r2)) / static_cast<double>(a.size())};
}

TouchFraction touch_fraction_grid(std::span<const Vec3> a, std::span<const Vec3> b,
                                  double radius) {
  if (a.empty() || b.empty()) throw std::invalid_argument("touch_fraction: empty cloud");
  return {static_cast<double>(count_near_grid(a, b, radius)) / static_cast<double>(b.size()),
          static_cast<double>(count_near_grid(b, a, radius)) / static_cast<double>(a.size())};
}

double mean_centroid_distance(std::span<const Vec3> centroids) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < centroids.size(); ++i)
    for (std::size_t j = i + 1; j < centroids.size(); ++j) {
      sum += centroid_distance(centroids[i], centroids[j]);
      ++pairs;
    }
  return pairs ? sum / static_cast<double>(pairs) : 0.0;
}

std::vector<Edge> build_edges(std::span<const ObjectNode> nodes,
                              std::span<const InstanceCloud> clouds, const EdgeOptions& opts) {
  if (nodes.size() != clouds.size())
    throw std::invalid_argument("build_edges: nodes and clouds differ in length");
  std::vector<Edge> edges;
  const std::size_t n = nodes.size();
  if (n < 2) return edges;

  std::vector<Vec3> centroids(n);
  for (std::size_t i = 0; i < n; ++i) centroids[i] = nodes[i].geometry.centroid;
  const double mean_d = mean_centroid_distance(centroids);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& pa = clouds[i].points;
      const auto& pb = clouds[j].points;
      double touch_w = 0.0;
      bool touch = false;
      if (!pa.empty() && !pb.empty()) {
        auto tf = opts.use_grid ? touch_fraction_grid(pa, pb, opts.touch_radius)
                                : touch_fraction(pa, pb, opts.touch_radius);
        touch_w = std::max(tf.b_near_a, tf.a_near_b);
        touch = touch_w > opts.touch_threshold;
      }
      const double d = centroid_distance(centroids[i], centroids[j]);
      const bool near = d <= opts.near_distance;
      // mean_d == 0 only when every centroid coincides, so d == 0 as well.
      const double near_w = mean_d > 0.0 ? std::exp(-d / mean_d) : 1.0;

      Edge e;
      e.a = std::min(nodes[i].id, nodes[j].id);
      e.b = std::max(nodes[i].id, nodes[j].id);
      if (touch && near) {
        e.kind = EdgeKind::kMixed;
        e.weight = touch_w + near_w;
      } else if (touch) {
        e.kind = EdgeKind::kTouch;
        e.weight = touch_w;
      } else if (near) {
        e.kind = EdgeKind::kNear;
        e.weight = near_w;
      } else {
        continue;
      }
      edges.push_back(e);
    }
  }
  return edges;
}

Gscg build_graph(const SceneBundle& bundle, const EdgeOptions& opts) {
  auto built = build_nodes(bundle);
  Gscg g;
  g.scene.source = bundle.source_id;
  std::set<std::string> classes;
  for (const auto& [id, label] : bundle.semantic_of_instance) classes.insert(label);
  g.scene.classes.assign(classes.begin(), classes.end());
  g.edges = build_edges(built.nodes, built.clouds, opts);
  for (auto& n : built.nodes) g.nodes.emplace(n.id, std::move(n));
  return g;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json vec_json(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

json lab_json(const LabColor& c) { return json::array({c.L, c.a, c.b}); }

// Accessors that report the JSON path of the offending field.
const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw GraphFormatError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw GraphFormatError(where + ": missing field '" + key + "'");
  return *it;
}

double num(const json& v, const std::string& where) {
  if (!v.is_number()) throw GraphFormatError(where + ": expected a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw GraphFormatError(where + ": expected an integer");
  return v.get<int>();
}

std::string str(const json& v, const std::string& where) {
  if (!v.is_string()) throw GraphFormatError(where + ": expected a string");
  return v.get<std::string>();
}

const json& array(const json& v, const std::string& where, std::size_t n = 0) {
  if (!v.is_array()) throw GraphFormatError(where + ": expected an array");
  if (n && v.size() != n)
    throw GraphFormatError(where + ": expected " + std::to_string(n) + " elements, got " +
                           std::to_string(v.size()));
  return v;
}

template <std::size_t N>
std::array<double, N> fixed(const json& v, const std::string& where) {
  array(v, where, N);
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = num(v[i], where + "[" + std::to_string(i) + "]");
  return out;
}

}  // namespace

std::string serialize(const Gscg& g, int indent) {
  json doc;
  doc["format_version"] = kGraphFormatVersion;
  doc["scene"] = {{"source", g.scene.source}, {"classes", g.scene.classes}};
  json nodes = json::array();
  for (const auto& [id, n] : g.nodes) {
    json jn;
    jn["id"] = n.id;
    jn["label"] = n.label ? json(*n.label) : json(nullptr);
    jn["centroid"] = vec_json(n.geometry.centroid);
    jn["size"] = vec_json(n.geometry.size);
    jn["orientation"] = vec_json(n.geometry.orientation_row_major());
    json mats = json::array();
    for (const auto& m : n.materials) {
      json cols = json::array();
      for (const auto& c : m.colors)
        cols.push_back({{"name", c.name}, {"lab", lab_json(c.lab)}, {"fraction", c.fraction}});
      mats.push_back({{"label", m.material}, {"fraction", m.area_fraction}, {"colors", cols}});
    }
    jn["materials"] = mats;
    jn["point_count"] = n.point_count;
    nodes.push_back(std::move(jn));
  }
  doc["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e.a, e.b, edge_kind_name(e.kind), e.weight});
  doc["edges"] = std::move(edges);
  return doc.dump(indent);
}

Gscg deserialize(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GraphFormatError(std::string("GSCG document: ") + e.what());
  }
  Gscg g;
  const std::string root = "$";
  int version = integer(field(doc, "format_version", root), "$.format_version");
  if (version != kGraphFormatVersion)
    throw GraphFormatError("$.format_version: unsupported version " + std::to_string(version));
  if (doc.contains("scene")) {
    const json& sc = doc["scene"];
    if (sc.contains("source")) g.scene.source = str(sc["source"], "$.scene.source");
    if (sc.contains("classes")) {
      const json& cl = array(sc["classes"], "$.scene.classes");
      for (std::size_t i = 0; i < cl.size(); ++i)
        g.scene.classes.push_back(str(cl[i], "$.scene.classes[" + std::to_string(i) + "]"));
    }
  }

  const json& nodes = array(field(doc, "nodes", root), "$.nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string w = "$.nodes[" + std::to_string(i) + "]";
    const json& jn = nodes[i];
    ObjectNode n;
    n.id = integer(field(jn, "id", w), w + ".id");
    const json& lab = field(jn, "label", w);
    if (!lab.is_null()) n.label = str(lab, w + ".label");
    n.geometry.centroid = fixed<3>(field(jn, "centroid", w), w + ".centroid");
    n.geometry.size = fixed<3>(field(jn, "size", w), w + ".size");
    auto rm = fixed<9>(field(jn, "orientation", w), w + ".orientation");
    n.geometry.axes = GeometryAttributes::axes_from_row_major(rm);
    const json& mats = array(field(jn, "materials", w), w + ".materials");
    if (mats.size() > kMaxMaterialParts)
      throw GraphFormatError(w + ".materials: more than 3 parts");
    for (std::size_t m = 0; m < mats.size(); ++m) {
      const std::string wm = w + ".materials[" + std::to_string(m) + "]";
      MaterialPart part;
      part.material = str(field(mats[m], "label", wm), wm + ".label");
      part.area_fraction = num(field(mats[m], "fraction", wm), wm + ".fraction");
      const json& cols = array(field(mats[m], "colors", wm), wm + ".colors");
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const std::string wc = wm + ".colors[" + std::to_string(c) + "]";
        ColorShare share;
        share.name = str(field(cols[c], "name", wc), wc + ".name");
        auto l = fixed<3>(field(cols[c], "lab", wc), wc + ".lab");
        share.lab = {l[0], l[1], l[2]};
        share.fraction = num(field(cols[c], "fraction", wc), wc + ".fraction");
        part.colors.push_back(std::move(share));
      }
      n.materials.push_back(std::move(part));
    }
    const json& pc = field(jn, "point_count", w);
    if (!pc.is_number_unsigned() && !(pc.is_number_integer() && pc.get<long long>() >= 0))
      throw GraphFormatError(w + ".point_count: expected a non-negative integer");
    n.point_count = pc.get<std::size_t>();
    if (!g.nodes.emplace(n.id, n).second)
      throw GraphFormatError(w + ".id: duplicate node id " + std::to_string(n.id));
  }

  const json& edges = array(field(doc, "edges", root), "$.edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string w = "$.edges[" + std::to_string(i) + "]";
    const json& je = array(edges[i], w, 4);
    Edge e;
    e.a = integer(je[0], w + "[0]");
    e.b = integer(je[1], w + "[1]");
    try {
      e.kind = parse_edge_kind(str(je[2], w + "[2]"));
    } catch (const GraphFormatError& err) {
      throw GraphFormatError(w + "[2]: " + err.what());
    }
    e.weight = num(je[3], w + "[3]");
    g.edges.push_back(e);
  }
  g.validate();
  return g;
}

Gscg read_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphFormatError(path.string() + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize(ss.str());
  } catch (const GraphFormatError& e) {
    throw GraphFormatError(path.string() + ": " + e.what());
  }
}

void write_graph(const Gscg& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw GraphFormatError(path.string() + ": cannot open for writing");
  out << serialize(graph) << "\n";
}

// ---------------------------------------------------------------------------
// Queries

std::vector<Neighbor> neighbors(const Gscg& graph, int node_id) {
  graph.node(node_id);
  std::vector<Neighbor> out;
  for (const auto& e : graph.edges) {
    if (e.a == node_id)
      out.push_back({&graph.node(e.b), e});
    else if (e.b == node_id)
      out.push_back({&graph.node(e.a), e});
  }
  return out;
}

std::map<std::string, int> label_histogram(const Gscg& graph, int exclude) {
  graph.node(exclude);
  std::map<std::string, int> hist;
  for (const auto& [id, n] : graph.nodes)
    if (id != exclude && n.label) ++hist[*n.label];
  return hist;
}

}  // namespace gscg
