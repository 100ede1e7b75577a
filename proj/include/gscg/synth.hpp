#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gscg/dataset.hpp"
#include "gscg/graph.hpp"
#include "json.hpp"

namespace gscg {

/// One class of the synthetic generative model. Classes sharing `group`
/// co-occur in the same scenes; the intrinsic attributes (size, dominant
/// material, colour) may coincide across groups.
struct SynthClass {
  std::string name;
  int group = 0;
  Vec3 size{1, 1, 1};    // median extents in metres
  std::string material;  // dominant material
  LabColor color{};      // mean LAB colour of the dominant material
};

struct SynthSpec {
  std::uint64_t seed = 7;
  std::vector<SynthClass> classes;
  std::vector<std::string> materials;  // sorted

  // Graph datasets.
  int n_train = 5000;
  int n_val = 1000;
  double context_purity = 0.85;      // chance a context label comes from the scene's group
  int min_context = 3;
  int max_context = 6;
  double neighbor_probability = 0.6;  // context objects after the first
  double size_log_sigma = 0.08;
  double material_purity = 0.9;
  double color_sigma = 6.0;

  // Scene bundles.
  int n_scenes = 50;
  int image_width = 480;
  int image_height = 360;
  double focal_length_px = 500.0;
  double depth_min = 2.5;
  double depth_max = 4.0;
  int min_objects = 2;
  int max_objects = 5;

  /// Ten classes in five co-occurrence groups of two; classes c and c + 5 share
  /// intrinsic attributes.
  static SynthSpec defaults();
  /// Missing fields keep their defaults. Throws std::invalid_argument when an
  /// invariant is violated.
  static SynthSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  void validate() const;

  int num_groups() const;
  std::vector<int> group_members(int group) const;
  int class_index(std::string_view name) const;
};

// --- scene bundles ---------------------------------------------------------------

/// Axis-aligned cuboid in camera coordinates. Its camera-facing side (z = lo[2])
/// is split horizontally into two material bands.
struct SynthBox {
  Vec3 lo{};
  Vec3 hi{};
  int instance_id = 0;
  std::string label;
  int material_top = 0;
  int material_bottom = 0;
  double split = 0.5;  // share of the height taken by the top band
  Rgb8 color_top;
  Rgb8 color_bottom;
};

struct SynthScene {
  std::vector<SynthBox> boxes;
  double background_depth = 8.0;
};

/// Random layout of thin, non-overlapping panels. Pairs are either in contact
/// (same depth, 4-10 mm apart) or clear of the touch radius, and every pair keeps
/// away from the touch-share and near-distance thresholds.
SynthScene sample_scene(const SynthSpec& spec, std::uint64_t scene_seed);

/// Ray casts the boxes through the spec's pinhole camera.
SceneBundle render_scene(const SynthSpec& spec, const SynthScene& scene,
                         const std::string& source_id = "synth");

/// Share of b's camera-facing rectangle lying within `radius` of a's, by exact
/// geometry and numerical quadrature. With focal_px > 0 both rectangles first
/// lose a border one pixel pitch (depth / focal_px) wide, as the 3x3 erosion does.
double analytic_touch_share(const SynthBox& a, const SynthBox& b, double radius,
                            double focal_px = 0.0);

/// Ground truth from the box geometry alone: face centres as centroids, 2-sigma
/// extents of a uniform rectangle as sizes, band areas as material fractions,
/// and edges from analytic touch shares and centroid distances.
Gscg analytic_graph(const SynthSpec& spec, const SynthScene& scene,
                    const EdgeOptions& opts = {});

struct SynthBundle {
  SynthScene scene;
  SceneBundle bundle;
  Gscg truth;
};

SynthBundle gen_bundle(const SynthSpec& spec, std::uint64_t scene_seed);
/// Scene i uses seed mix_seed(spec.seed, i).
std::uint64_t scene_seed(const SynthSpec& spec, int index);

// --- graph datasets ----------------------------------------------------------------

/// One scene per sample with a single target: a group is drawn, the target class
/// uniformly within it, then 3-6 context objects whose labels mostly come from the
/// same group. The target's size, dominant material and colour follow its class.
Dataset gen_graph_dataset(const SynthSpec& spec);

enum class OracleInputs { kAll, kNeighborLabels, kIntrinsic };

/// Exact log posterior (up to a constant) over spec.classes computed from the
/// generative rules, restricted to the given inputs.
std::vector<double> oracle_log_posterior(const SynthSpec& spec, const Gscg& graph, int target,
                                         OracleInputs inputs);
std::string oracle_predict(const SynthSpec& spec, const Gscg& graph, int target,
                           OracleInputs inputs);
double oracle_accuracy(const SynthSpec& spec, const Dataset& data,
                       const std::vector<Sample>& samples, OracleInputs inputs);

}  // namespace gscg
