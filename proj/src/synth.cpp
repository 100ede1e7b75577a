#include "gscg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "gscg/random.hpp"

namespace gscg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Spec

SynthSpec SynthSpec::defaults() {
  struct Archetype {
    Vec3 size;
    const char* material;
    LabColor color;
  };
  static const Archetype kArchetypes[5] = {
      {{1.9, 0.6, 1.5}, "fabric", {60, 10, 20}},  {{1.0, 1.9, 0.6}, "wood", {45, 12, 30}},
      {{1.3, 0.75, 0.7}, "metal", {70, 0, -5}},   {{0.45, 0.04, 0.15}, "plastic", {25, 0, 0}},
      {{0.6, 0.45, 0.7}, "ceramic", {92, 0, 3}},
  };
  static const char* kNames[10] = {"bed",  "wardrobe", "desk", "keyboard", "oven",
                                   "sink", "sofa",     "tv",   "toilet",   "bathtub"};
  SynthSpec s;
  for (int c = 0; c < 10; ++c) {
    const auto& a = kArchetypes[c % 5];
    s.classes.push_back({kNames[c], c / 2, a.size, a.material, a.color});
  }
  s.materials = {"ceramic", "fabric", "glass", "metal", "plastic", "wood"};
  return s;
}

int SynthSpec::num_groups() const {
  int g = 0;
  for (const auto& c : classes) g = std::max(g, c.group + 1);
  return g;
}

std::vector<int> SynthSpec::group_members(int group) const {
  std::vector<int> out;
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (classes[c].group == group) out.push_back(static_cast<int>(c));
  return out;
}

int SynthSpec::class_index(std::string_view name) const {
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (classes[c].name == name) return static_cast<int>(c);
  return -1;
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("synth spec: " + m); };
  if (classes.size() < 2) fail("at least two classes required");
  if (materials.size() < 2) fail("at least two materials required");
  if (!std::is_sorted(materials.begin(), materials.end()) ||
      std::adjacent_find(materials.begin(), materials.end()) != materials.end())
    fail("materials must be sorted and unique");
  std::set<std::string> names;
  for (const auto& c : classes) {
    if (c.name.empty() || !names.insert(c.name).second) fail("duplicate or empty class name");
    if (c.group < 0) fail(c.name + ": negative group");
    for (double v : c.size)
      if (!(v > 0)) fail(c.name + ": sizes must be positive");
    if (!std::binary_search(materials.begin(), materials.end(), c.material))
      fail(c.name + ": unknown material '" + c.material + "'");
  }
  for (int g = 0; g < num_groups(); ++g)
    if (group_members(g).empty()) fail("group " + std::to_string(g) + " has no classes");
  auto prob = [&](double p, const char* what) {
    if (!(p >= 0 && p <= 1)) fail(std::string(what) + " must lie in [0, 1]");
  };
  prob(context_purity, "context_purity");
  prob(neighbor_probability, "neighbor_probability");
  prob(material_purity, "material_purity");
  if (n_train < 0 || n_val < 0 || n_scenes < 0) fail("counts must be non-negative");
  if (min_context < 1 || max_context < min_context) fail("need 1 <= min_context <= max_context");
  if (!(size_log_sigma > 0) || !(color_sigma > 0)) fail("sigmas must be positive");
  if (image_width < 16 || image_height < 16) fail("image too small");
  if (!(focal_length_px > 0)) fail("focal_length_px must be positive");
  if (!(depth_min > 0) || depth_max < depth_min) fail("need 0 < depth_min <= depth_max");
  if (min_objects < 0 || max_objects < min_objects) fail("need 0 <= min_objects <= max_objects");
}

json SynthSpec::to_json() const {
  json cls = json::array();
  for (const auto& c : classes)
    cls.push_back({{"name", c.name},
                   {"group", c.group},
                   {"size", c.size},
                   {"material", c.material},
                   {"color", {c.color.L, c.color.a, c.color.b}}});
  return {{"seed", seed},
          {"classes", cls},
          {"materials", materials},
          {"n_train", n_train},
          {"n_val", n_val},
          {"context_purity", context_purity},
          {"min_context", min_context},
          {"max_context", max_context},
          {"neighbor_probability", neighbor_probability},
          {"size_log_sigma", size_log_sigma},
          {"material_purity", material_purity},
          {"color_sigma", color_sigma},
          {"n_scenes", n_scenes},
          {"image_width", image_width},
          {"image_height", image_height},
          {"focal_length_px", focal_length_px},
          {"depth_min", depth_min},
          {"depth_max", depth_max},
          {"min_objects", min_objects},
          {"max_objects", max_objects}};
}

SynthSpec SynthSpec::from_json(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("synth spec: expected an object");
  SynthSpec s = defaults();
  auto get = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    try {
      field = doc[key].get<std::remove_reference_t<decltype(field)>>();
    } catch (const json::exception&) {
      throw std::invalid_argument(std::string("synth spec: bad value for '") + key + "'");
    }
  };
  get("seed", s.seed);
  get("materials", s.materials);
  get("n_train", s.n_train);
  get("n_val", s.n_val);
  get("context_purity", s.context_purity);
  get("min_context", s.min_context);
  get("max_context", s.max_context);
  get("neighbor_probability", s.neighbor_probability);
  get("size_log_sigma", s.size_log_sigma);
  get("material_purity", s.material_purity);
  get("color_sigma", s.color_sigma);
  get("n_scenes", s.n_scenes);
  get("image_width", s.image_width);
  get("image_height", s.image_height);
  get("focal_length_px", s.focal_length_px);
  get("depth_min", s.depth_min);
  get("depth_max", s.depth_max);
  get("min_objects", s.min_objects);
  get("max_objects", s.max_objects);
  if (doc.contains("classes")) {
    s.classes.clear();
    for (const auto& jc : doc["classes"]) {
      try {
        SynthClass c;
        c.name = jc.at("name").get<std::string>();
        c.group = jc.at("group").get<int>();
        c.size = jc.at("size").get<Vec3>();
        c.material = jc.at("material").get<std::string>();
        const auto lab = jc.at("color").get<std::array<double, 3>>();
        c.color = {lab[0], lab[1], lab[2]};
        s.classes.push_back(std::move(c));
      } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("synth spec: bad class entry: ") + e.what());
      }
    }
  }
  s.validate();
  return s;
}

std::uint64_t scene_seed(const SynthSpec& spec, int index) {
  return mix_seed(spec.seed, static_cast<std::uint64_t>(index));
}

// ---------------------------------------------------------------------------
// Scene bundles

namespace {

constexpr double kPanelDepth = 0.005;
constexpr double kShareLow = 0.02;   // analytic touch shares must avoid (kShareLow, kShareHigh)
constexpr double kShareHigh = 0.15;
constexpr double kNearClearance = 0.03;
constexpr double kImageMargin = 2.0;  // pixels

struct Rect {
  double u0, v0, u1, v1;
};

Rect image_rect(const SynthBox& b, const CameraIntrinsics& cam) {
  Rect r{1e300, 1e300, -1e300, -1e300};
  for (int i = 0; i < 8; ++i) {
    const Vec3 p{i & 1 ? b.hi[0] : b.lo[0], i & 2 ? b.hi[1] : b.lo[1], i & 4 ? b.hi[2] : b.lo[2]};
    const auto uv = project(p, cam);
    r.u0 = std::min(r.u0, uv[0]);
    r.v0 = std::min(r.v0, uv[1]);
    r.u1 = std::max(r.u1, uv[0]);
    r.v1 = std::max(r.v1, uv[1]);
  }
  return r;
}

bool overlaps(const Rect& a, const Rect& b) {
  return a.u0 <= b.u1 && b.u0 <= a.u1 && a.v0 <= b.v1 && b.v0 <= a.v1;
}

Vec3 face_center(const SynthBox& b) {
  return {(b.lo[0] + b.hi[0]) / 2, (b.lo[1] + b.hi[1]) / 2, b.lo[2]};
}

double distance(const Vec3& p, const Vec3& q) {
  return std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]);
}

Rgb8 random_rgb(std::mt19937_64& rng) {
  auto c = [&] { return static_cast<std::uint8_t>(uniform_index(rng, 256)); };
  return {c(), c(), c()};
}

bool layout_clear(const SynthBox& b, const std::vector<SynthBox>& boxes,
                  const CameraIntrinsics& cam, const EdgeOptions& opts) {
  const Rect r = image_rect(b, cam);
  if (r.u0 < kImageMargin || r.v0 < kImageMargin || r.u1 > cam.width - 1 - kImageMargin ||
      r.v1 > cam.height - 1 - kImageMargin)
    return false;
  for (const auto& o : boxes) {
    if (overlaps(r, image_rect(o, cam))) return false;
    const double share =
        std::max(analytic_touch_share(o, b, opts.touch_radius, cam.focal_length_px),
                 analytic_touch_share(b, o, opts.touch_radius, cam.focal_length_px));
    if (share > kShareLow && share < kShareHigh) return false;
    if (std::abs(distance(face_center(o), face_center(b)) - opts.near_distance) < kNearClearance)
      return false;
  }
  return true;
}

}  // namespace

double analytic_touch_share(const SynthBox& a_box, const SynthBox& b_box, double radius,
                            double focal_px) {
  auto inset = [&](SynthBox box) {
    if (focal_px > 0) {
      const double pitch = box.lo[2] / focal_px;
      for (int k = 0; k < 2; ++k) {
        box.lo[k] += pitch;
        box.hi[k] -= pitch;
      }
    }
    return box;
  };
  const SynthBox a = inset(a_box), b = inset(b_box);
  if (b.hi[0] <= b.lo[0] || b.hi[1] <= b.lo[1]) return 0.0;
  const double dz = std::abs(a.lo[2] - b.lo[2]);
  if (dz > radius) return 0.0;
  const double r = std::sqrt(radius * radius - dz * dz);
  const double x0 = std::max(b.lo[0], a.lo[0] - r), x1 = std::min(b.hi[0], a.hi[0] + r);
  if (x1 <= x0) return 0.0;
  // Height of b's band inside the rounded-rectangle dilation of a, per column.
  auto covered = [&](double x) {
    double h;
    if (x >= a.lo[0] && x <= a.hi[0]) {
      h = r;
    } else {
      const double dx = x < a.lo[0] ? a.lo[0] - x : x - a.hi[0];
      if (dx >= r) return 0.0;
      h = std::sqrt(r * r - dx * dx);
    }
    return std::max(0.0, std::min(b.hi[1], a.hi[1] + h) - std::max(b.lo[1], a.lo[1] - h));
  };
  constexpr int kCells = 4000;
  const double step = (x1 - x0) / kCells;
  double area = 0;
  for (int i = 0; i < kCells; ++i) area += covered(x0 + (i + 0.5) * step);
  area *= step;
  return area / ((b.hi[0] - b.lo[0]) * (b.hi[1] - b.lo[1]));
}

SynthScene sample_scene(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const auto cam =
      CameraIntrinsics::centered(spec.focal_length_px, spec.image_width, spec.image_height);
  const EdgeOptions opts;
  const int n = spec.min_objects +
                static_cast<int>(uniform_index(rng, spec.max_objects - spec.min_objects + 1));
  const int n_mat = static_cast<int>(spec.materials.size());

  SynthScene scene;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    scene.boxes.clear();
    for (int i = 0; i < n; ++i) {
      bool placed = false;
      for (int t = 0; t < 200 && !placed; ++t) {
        SynthBox b;
        const double w = uniform(rng, 0.12, 0.45), h = uniform(rng, 0.12, 0.45);
        if (!scene.boxes.empty() && unit(rng) < 0.4) {
          const auto& o = scene.boxes[uniform_index(rng, scene.boxes.size())];
          const double gap = uniform(rng, 0.004, 0.01);
          b.lo[2] = o.lo[2];
          switch (uniform_index(rng, 4)) {
            case 0:  // right of o
              b.lo[0] = o.hi[0] + gap;
              b.lo[1] = uniform(rng, o.lo[1], o.hi[1]) - h / 2;
              break;
            case 1:  // left of o
              b.lo[0] = o.lo[0] - gap - w;
              b.lo[1] = uniform(rng, o.lo[1], o.hi[1]) - h / 2;
              break;
            case 2:  // below o
              b.lo[1] = o.hi[1] + gap;
              b.lo[0] = uniform(rng, o.lo[0], o.hi[0]) - w / 2;
              break;
            default:  // above o
              b.lo[1] = o.lo[1] - gap - h;
              b.lo[0] = uniform(rng, o.lo[0], o.hi[0]) - w / 2;
          }
        } else {
          b.lo[2] = uniform(rng, spec.depth_min, spec.depth_max);
          const double half_w = (cam.width / 2.0 - 4) * b.lo[2] / cam.focal_length_px;
          const double half_h = (cam.height / 2.0 - 4) * b.lo[2] / cam.focal_length_px;
          b.lo[0] = uniform(rng, -half_w, half_w - w);
          b.lo[1] = uniform(rng, -half_h, half_h - h);
        }
        b.hi = {b.lo[0] + w, b.lo[1] + h, b.lo[2] + kPanelDepth};
        if (!layout_clear(b, scene.boxes, cam, opts)) continue;
        b.instance_id = i + 1;
        b.label = spec.classes[uniform_index(rng, spec.classes.size())].name;
        b.material_top = static_cast<int>(uniform_index(rng, n_mat));
        b.material_bottom = static_cast<int>(uniform_index(rng, n_mat));
        b.split = uniform(rng, 0.3, 0.7);
        b.color_top = random_rgb(rng);
        b.color_bottom = random_rgb(rng);
        scene.boxes.push_back(b);
        placed = true;
      }
      if (!placed) break;
    }
    if (static_cast<int>(scene.boxes.size()) == n) return scene;
  }
  throw std::runtime_error("synth: no clear layout found for seed " + std::to_string(seed));
}

SceneBundle render_scene(const SynthSpec& spec, const SynthScene& scene,
                         const std::string& source_id) {
  const int W = spec.image_width, H = spec.image_height;
  SceneBundle b;
  b.intrinsics = CameraIntrinsics::centered(spec.focal_length_px, W, H);
  b.rgb = Raster<Rgb8>(W, H, Rgb8{128, 128, 128});
  b.depth_m = Raster<float>(W, H, static_cast<float>(scene.background_depth));
  b.instance_map = Raster<std::uint16_t>(W, H, 0);
  b.material_map = Raster<std::uint8_t>(W, H, 0);
  b.material_vocab = spec.materials;
  b.source_id = source_id;
  for (const auto& box : scene.boxes) b.semantic_of_instance[box.instance_id] = box.label;
  const auto& cam = b.intrinsics;
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W; ++u) {
      const Vec3 d{(u - cam.cx) / cam.focal_length_px, (v - cam.cy) / cam.focal_length_px, 1.0};
      double best = std::numeric_limits<double>::infinity();
      const SynthBox* hit = nullptr;
      for (const auto& box : scene.boxes) {
        double t0 = 0, t1 = std::numeric_limits<double>::infinity();
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
          if (d[a] == 0) {
            miss = box.lo[a] > 0 || box.hi[a] < 0;
            continue;
          }
          double ta = box.lo[a] / d[a], tb = box.hi[a] / d[a];
          if (ta > tb) std::swap(ta, tb);
          t0 = std::max(t0, ta);
          t1 = std::min(t1, tb);
          miss = t0 > t1;
        }
        if (!miss && t0 > 0 && t0 < best) {
          best = t0;
          hit = &box;
        }
      }
      if (!hit) continue;
      const double y = best * d[1];
      const bool top = y < hit->lo[1] + hit->split * (hit->hi[1] - hit->lo[1]);
      b.depth_m.at(u, v) = static_cast<float>(best);
      b.instance_map.at(u, v) = static_cast<std::uint16_t>(hit->instance_id);
      b.material_map.at(u, v) =
          static_cast<std::uint8_t>(top ? hit->material_top : hit->material_bottom);
      b.rgb.at(u, v) = top ? hit->color_top : hit->color_bottom;
    }
  return b;
}

Gscg analytic_graph(const SynthSpec& spec, const SynthScene& scene, const EdgeOptions& opts) {
  Gscg g;
  g.scene.source = "synth";
  std::set<std::string> classes;
  std::vector<Vec3> centroids;
  for (const auto& box : scene.boxes) {
    ObjectNode n;
    n.id = box.instance_id;
    n.label = box.label;
    classes.insert(box.label);
    const double w = box.hi[0] - box.lo[0], h = box.hi[1] - box.lo[1];
    n.geometry.centroid = face_center(box);
    const bool wide = w >= h;
    n.geometry.size = {std::max(w, h) / std::sqrt(3.0), std::min(w, h) / std::sqrt(3.0), 0.0};
    n.geometry.axes = {Vec3{wide ? 1.0 : 0.0, wide ? 0.0 : 1.0, 0.0},
                       Vec3{wide ? 0.0 : 1.0, wide ? 1.0 : 0.0, 0.0}, Vec3{0, 0, 1}};
    struct Band {
      int material;
      double fraction;
      Rgb8 color;
    };
    std::vector<Band> bands{{box.material_top, box.split, box.color_top},
                            {box.material_bottom, 1 - box.split, box.color_bottom}};
    std::stable_sort(bands.begin(), bands.end(),
                     [](const Band& x, const Band& y) { return x.fraction > y.fraction; });
    if (bands[0].material == bands[1].material) {
      MaterialPart part{spec.materials[bands[0].material], 1.0, {}};
      for (const auto& band : bands) {
        const LabColor lab = rgb_to_lab(band.color);
        part.colors.push_back({name_color(lab), lab, band.fraction});
      }
      n.materials.push_back(std::move(part));
    } else {
      for (const auto& band : bands) {
        const LabColor lab = rgb_to_lab(band.color);
        n.materials.push_back(
            {spec.materials[band.material], band.fraction, {{name_color(lab), lab, 1.0}}});
      }
    }
    centroids.push_back(n.geometry.centroid);
    g.nodes.emplace(n.id, std::move(n));
  }
  g.scene.classes.assign(classes.begin(), classes.end());
  const double mean = mean_centroid_distance(centroids);
  const auto& boxes = scene.boxes;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      const double share = std::max(
          analytic_touch_share(boxes[i], boxes[j], opts.touch_radius, spec.focal_length_px),
          analytic_touch_share(boxes[j], boxes[i], opts.touch_radius, spec.focal_length_px));
      const double d = distance(centroids[i], centroids[j]);
      const bool touch = share > opts.touch_threshold, is_near = d <= opts.near_distance;
      if (!touch && !is_near) continue;
      const double w = mean > 0 ? std::exp(-d / mean) : 1.0;
      Edge e{std::min(boxes[i].instance_id, boxes[j].instance_id),
             std::max(boxes[i].instance_id, boxes[j].instance_id), EdgeKind::kNear, w};
      if (touch && is_near) {
        e.kind = EdgeKind::kMixed;
        e.weight = share + w;
      } else if (touch) {
        e.kind = EdgeKind::kTouch;
        e.weight = share;
      }
      g.edges.push_back(e);
    }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const Edge& x, const Edge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  return g;
}

SynthBundle gen_bundle(const SynthSpec& spec, std::uint64_t seed) {
  SynthBundle out;
  out.scene = sample_scene(spec, seed);
  out.bundle = render_scene(spec, out.scene, "synth_" + std::to_string(seed));
  out.truth = analytic_graph(spec, out.scene);
  out.truth.scene.source = out.bundle.source_id;
  return out;
}

// ---------------------------------------------------------------------------
// Graph datasets

namespace {

LabColor random_lab(std::mt19937_64& rng) {
  return {uniform(rng, 10, 95), uniform(rng, -60, 60), uniform(rng, -60, 60)};
}

ObjectNode sample_object(const SynthSpec& spec, int cls, int id, const Vec3& centroid,
                         std::mt19937_64& rng) {
  const auto& c = spec.classes[cls];
  const int n_mat = static_cast<int>(spec.materials.size());
  ObjectNode n;
  n.id = id;
  n.label = c.name;
  for (int a = 0; a < 3; ++a)
    n.geometry.size[a] = c.size[a] * std::exp(spec.size_log_sigma * normal(rng));
  const double theta = uniform(rng, 0, 2 * std::numbers::pi);
  n.geometry.axes = {Vec3{std::cos(theta), 0, std::sin(theta)}, Vec3{0, 1, 0},
                     Vec3{-std::sin(theta), 0, std::cos(theta)}};
  n.geometry.centroid = centroid;
  n.point_count = 200 + uniform_index(rng, 5000);

  const int dominant = static_cast<int>(
      std::lower_bound(spec.materials.begin(), spec.materials.end(), c.material) -
      spec.materials.begin());
  int primary = dominant;
  if (unit(rng) >= spec.material_purity) {
    primary = static_cast<int>(uniform_index(rng, n_mat - 1));
    if (primary >= dominant) ++primary;
  }
  int secondary = static_cast<int>(uniform_index(rng, n_mat - 1));
  if (secondary >= primary) ++secondary;

  const double u = uniform(rng, 0.6, 0.9), v = uniform(rng, 0.6, 0.9);
  const LabColor main{c.color.L + spec.color_sigma * normal(rng),
                      c.color.a + spec.color_sigma * normal(rng),
                      c.color.b + spec.color_sigma * normal(rng)};
  const LabColor accent = random_lab(rng), other = random_lab(rng);
  n.materials.push_back({spec.materials[primary],
                         u,
                         {{name_color(main), main, v}, {name_color(accent), accent, 1 - v}}});
  n.materials.push_back({spec.materials[secondary], 1 - u, {{name_color(other), other, 1.0}}});
  return n;
}

Vec3 offset(const Vec3& p, double dist, std::mt19937_64& rng) {
  const double th = uniform(rng, 0, 2 * std::numbers::pi);
  return {p[0] + dist * std::cos(th), p[1] + uniform(rng, -0.3, 0.3), p[2] + dist * std::sin(th)};
}

double log_normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma);
}

}  // namespace

Dataset gen_graph_dataset(const SynthSpec& spec) {
  spec.validate();
  Dataset data;
  const int total = spec.n_train + spec.n_val;
  const int n_classes = static_cast<int>(spec.classes.size());
  const int groups = spec.num_groups();
  data.graphs.reserve(total);
  for (int i = 0; i < total; ++i) {
    std::mt19937_64 rng(mix_seed(spec.seed, 1000000 + static_cast<std::uint64_t>(i)));
    const int g = static_cast<int>(uniform_index(rng, groups));
    const auto members = spec.group_members(g);
    const int target_cls = members[uniform_index(rng, members.size())];
    const int k = spec.min_context +
                  static_cast<int>(uniform_index(rng, spec.max_context - spec.min_context + 1));

    // Ids are a random permutation so position carries no signal.
    std::vector<int> ids(k + 1);
    for (int j = 0; j <= k; ++j) ids[j] = j + 1;
    for (int j = k; j > 0; --j) std::swap(ids[j], ids[uniform_index(rng, j + 1)]);

    Gscg graph;
    graph.scene.source = "synth_graph_" + std::to_string(i);
    const Vec3 origin{uniform(rng, -1, 1), uniform(rng, -0.5, 0.5), uniform(rng, 2, 5)};
    const int target_id = ids[0];
    graph.nodes.emplace(target_id, sample_object(spec, target_cls, target_id, origin, rng));
    std::set<std::string> classes{spec.classes[target_cls].name};
    for (int j = 1; j <= k; ++j) {
      int cls;
      if (unit(rng) < spec.context_purity) {
        const auto own = spec.group_members(g);
        cls = own[uniform_index(rng, own.size())];
      } else {
        cls = static_cast<int>(uniform_index(rng, n_classes));
      }
      const bool is_neighbor = j == 1 || unit(rng) < spec.neighbor_probability;
      const Vec3 at = offset(origin, is_neighbor ? uniform(rng, 0.3, 1.0) : uniform(rng, 1.5, 3.0), rng);
      graph.nodes.emplace(ids[j], sample_object(spec, cls, ids[j], at, rng));
      classes.insert(spec.classes[cls].name);
      if (is_neighbor) {
        const auto kind = static_cast<EdgeKind>(uniform_index(rng, kNumEdgeKinds));
        const double touch = uniform(rng, 0.06, 0.6), near = uniform(rng, 0.2, 1.0);
        const double w = kind == EdgeKind::kTouch ? touch
                         : kind == EdgeKind::kNear ? near
                                                   : touch + near;
        graph.edges.push_back({std::min(target_id, ids[j]), std::max(target_id, ids[j]), kind, w});
      }
    }
    std::sort(graph.edges.begin(), graph.edges.end(), [](const Edge& x, const Edge& y) {
      return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    graph.scene.classes.assign(classes.begin(), classes.end());
    data.graphs.push_back(std::move(graph));
    Sample s{static_cast<std::size_t>(i), target_id, spec.classes[target_cls].name};
    (i < spec.n_train ? data.train : data.val).push_back(std::move(s));
  }
  return data;
}

std::vector<double> oracle_log_posterior(const SynthSpec& spec, const Gscg& graph, int target,
                                         OracleInputs inputs) {
  const int n_classes = static_cast<int>(spec.classes.size());
  const int groups = spec.num_groups();
  std::vector<double> lp(n_classes, 0.0);
  for (int c = 0; c < n_classes; ++c)
    lp[c] = -std::log(static_cast<double>(groups)) -
            std::log(static_cast<double>(spec.group_members(spec.classes[c].group).size()));

  if (inputs != OracleInputs::kIntrinsic) {
    std::vector<const ObjectNode*> context;
    if (inputs == OracleInputs::kAll) {
      for (const auto& [id, n] : graph.nodes)
        if (id != target) context.push_back(&n);
    } else {
      for (const auto& nb : neighbors(graph, target)) context.push_back(nb.node);
    }
    for (int c = 0; c < n_classes; ++c) {
      const int g = spec.classes[c].group;
      const double group_size = static_cast<double>(spec.group_members(g).size());
      for (const auto* n : context) {
        if (!n->label) continue;
        const int l = spec.class_index(*n->label);
        if (l < 0) continue;
        const double p = (spec.classes[l].group == g ? spec.context_purity / group_size : 0.0) +
                         (1 - spec.context_purity) / n_classes;
        lp[c] += std::log(p);
      }
    }
  }

  if (inputs != OracleInputs::kNeighborLabels) {
    const auto& node = graph.node(target);
    const MaterialPart* primary = nullptr;
    for (const auto& m : node.materials)
      if (!primary || m.area_fraction > primary->area_fraction) primary = &m;
    const ColorShare* main = nullptr;
    if (primary)
      for (const auto& cs : primary->colors)
        if (!main || cs.fraction > main->fraction) main = &cs;
    const double n_mat = static_cast<double>(spec.materials.size());
    for (int c = 0; c < n_classes; ++c) {
      const auto& k = spec.classes[c];
      for (int a = 0; a < 3; ++a)
        lp[c] += log_normal_pdf(std::log(node.geometry.size[a]), std::log(k.size[a]),
                                spec.size_log_sigma);
      if (primary)
        lp[c] += std::log(primary->material == k.material ? spec.material_purity
                                                          : (1 - spec.material_purity) / (n_mat - 1));
      if (main) {
        lp[c] += log_normal_pdf(main->lab.L, k.color.L, spec.color_sigma) +
                 log_normal_pdf(main->lab.a, k.color.a, spec.color_sigma) +
                 log_normal_pdf(main->lab.b, k.color.b, spec.color_sigma);
      }
    }
  }
  return lp;
}

std::string oracle_predict(const SynthSpec& spec, const Gscg& graph, int target,
                           OracleInputs inputs) {
  const auto lp = oracle_log_posterior(spec, graph, target, inputs);
  return spec.classes[std::max_element(lp.begin(), lp.end()) - lp.begin()].name;
}

double oracle_accuracy(const SynthSpec& spec, const Dataset& data,
                       const std::vector<Sample>& samples, OracleInputs inputs) {
  if (samples.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : samples)
    hit += oracle_predict(spec, data.graphs[s.graph], s.target, inputs) == s.label;
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

}  // namespace gscg
