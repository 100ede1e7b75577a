#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gscg/graph.hpp"

namespace gscg::testing {

struct EdgeScene {
  std::vector<ObjectNode> nodes;
  std::vector<InstanceCloud> clouds;
};

/// Up to 10 box-shaped point blobs with at most 500 points in total.
inline EdgeScene random_edge_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0, 1);
  EdgeScene s;
  const int n = 1 + static_cast<int>(rng() % 10);
  const int budget = 400 / n;
  for (int i = 0; i < n; ++i) {
    InstanceCloud c;
    c.instance_id = 1 + i * 3 + static_cast<int>(rng() % 3);
    const Vec3 center{2.5 * U(rng), 2.5 * U(rng), 1.0 + 2.0 * U(rng)};
    const Vec3 half{0.05 + 0.6 * U(rng), 0.05 + 0.6 * U(rng), 0.05 + 0.3 * U(rng)};
    const int count = 1 + static_cast<int>(rng() % budget);
    for (int k = 0; k < count; ++k)
      c.points.push_back({center[0] + half[0] * (2 * U(rng) - 1),
                          center[1] + half[1] * (2 * U(rng) - 1),
                          center[2] + half[2] * (2 * U(rng) - 1)});
    // Some objects reach into an earlier one, giving touches at any centroid distance.
    if (i > 0 && U(rng) < 0.4) {
      const auto& other = s.clouds[rng() % s.clouds.size()].points;
      const int contact = 1 + static_cast<int>(rng() % (count / 5 + 1));
      for (int k = 0; k < contact; ++k) {
        const auto& p = other[rng() % other.size()];
        c.points.push_back({p[0] + 0.04 * (U(rng) - 0.5), p[1] + 0.04 * (U(rng) - 0.5),
                            p[2] + 0.04 * (U(rng) - 0.5)});
      }
    }
    ObjectNode node;
    node.id = c.instance_id;
    node.geometry = pca_geometry(c);
    node.point_count = c.size();
    s.nodes.push_back(node);
    s.clouds.push_back(std::move(c));
  }
  return s;
}

/// Independent edge oracle: exhaustive pair scan written directly from the rules.
inline std::vector<Edge> oracle_edges(const EdgeScene& s, double radius = 0.05,
                                      double threshold = 0.05, double near = 1.0) {
  auto dist = [](const Vec3& p, const Vec3& q) {
    return std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]);
  };
  auto share = [&](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    int hit = 0;
    for (const auto& q : to) {
      bool any = false;
      for (const auto& p : from) {
        const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
        if (dx * dx + dy * dy + dz * dz <= radius * radius) any = true;
      }
      hit += any;
    }
    return static_cast<double>(hit) / static_cast<double>(to.size());
  };
  const std::size_t n = s.nodes.size();
  double sum = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      sum += dist(s.nodes[i].geometry.centroid, s.nodes[j].geometry.centroid);
      ++pairs;
    }
  const double mean = pairs ? sum / pairs : 0.0;
  std::vector<Edge> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double t = std::max(share(s.clouds[i].points, s.clouds[j].points),
                                share(s.clouds[j].points, s.clouds[i].points));
      const double d = dist(s.nodes[i].geometry.centroid, s.nodes[j].geometry.centroid);
      const bool touch = t > threshold, is_near = d <= near;
      const double w = mean > 0 ? std::exp(-d / mean) : 1.0;
      Edge e{std::min(s.nodes[i].id, s.nodes[j].id), std::max(s.nodes[i].id, s.nodes[j].id),
             EdgeKind::kNear, 0.0};
      if (touch && is_near) {
        e.kind = EdgeKind::kMixed;
        e.weight = t + w;
      } else if (touch) {
        e.kind = EdgeKind::kTouch;
        e.weight = t;
      } else if (is_near) {
        e.weight = w;
      } else {
        continue;
      }
      out.push_back(e);
    }
  return out;
}

/// Arbitrary valid graph with full-precision doubles in every field.
inline Gscg random_graph(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-10, 10), F(0, 1);
  static const char* kLabels[] = {"bed", "chair", "desk \"office\"", "tv", "sofa", "lamp/\\x"};
  static const char* kMaterials[] = {"wood", "metal", "fabric", "plastic", "glass"};
  Gscg g;
  g.scene.source = "rand_" + std::to_string(rng() % 100000);
  for (const char* l : kLabels) g.scene.classes.push_back(l);
  const int n = static_cast<int>(rng() % 12);
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) {
    ObjectNode node;
    node.id = static_cast<int>(rng() % 4) + (ids.empty() ? 0 : ids.back() + 1);
    ids.push_back(node.id);
    if (rng() % 4) node.label = kLabels[rng() % 6];
    for (int a = 0; a < 3; ++a) {
      node.geometry.centroid[a] = U(rng);
      node.geometry.size[a] = F(rng) * 3;
      for (int b = 0; b < 3; ++b) node.geometry.axes[a][b] = U(rng) / 10;
    }
    node.point_count = rng() % 100000;
    const int parts = static_cast<int>(rng() % 4);
    for (int p = 0; p < parts; ++p) {
      MaterialPart part;
      part.material = kMaterials[rng() % 5];
      part.area_fraction = F(rng);
      const int colors = static_cast<int>(rng() % 4);
      for (int c = 0; c < colors; ++c)
        part.colors.push_back({"color" + std::to_string(rng() % 148),
                               {F(rng) * 100, U(rng) * 10, U(rng) * 10},
                               F(rng)});
      node.materials.push_back(std::move(part));
    }
    g.nodes.emplace(node.id, std::move(node));
  }
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j)
      if (rng() % 3 == 0)
        g.edges.push_back({ids[i], ids[j], static_cast<EdgeKind>(rng() % 3), F(rng) * 2});
  return g;
}

}  // namespace gscg::testing
