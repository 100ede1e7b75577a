#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "gscg/scene_io.hpp"

namespace gscg {

using Mask = Raster<std::uint8_t>;

struct InstanceCloud {
  int instance_id = 0;
  std::vector<Vec3> points;
  std::vector<std::array<int, 2>> source_pixels;

  std::size_t size() const { return points.size(); }
};

struct GeometryAttributes {
  /// 2 sqrt(lambda_i) per principal axis, descending, metres.
  Vec3 size{};
  /// axes[c] is the c-th principal axis (unit length), descending variance.
  std::array<Vec3, 3> axes{};
  Vec3 centroid{};

  /// Row-major 3x3 with the principal axes as columns.
  std::array<double, 9> orientation_row_major() const;
  static std::array<Vec3, 3> axes_from_row_major(std::span<const double, 9> m);

  friend bool operator==(const GeometryAttributes&, const GeometryAttributes&) = default;
};

inline constexpr int kErosionKernel = 3;
inline constexpr double kZScoreThreshold = 2.5;
inline constexpr std::size_t kMinInstancePoints = 100;

/// Binary erosion with a k x k square kernel. Pixels outside the image count as 0.
Mask erode_mask(const Mask& mask, int kernel);

/// Keeps points whose |p - mean| / std is <= threshold on every axis, using
/// statistics of the input (population std). Zero-variance axes never reject.
std::vector<Vec3> zscore_filter(std::span<const Vec3> points, double threshold);
/// Same, returning the retained indices in input order.
std::vector<std::size_t> zscore_keep_indices(std::span<const Vec3> points, double threshold);

struct InstanceExtraction {
  /// Empty when fewer than kMinInstancePoints points survive filtering.
  std::optional<InstanceCloud> cloud;
  /// Pixels of the eroded mask (valid depth or not).
  Mask eroded_mask;
  std::size_t eroded_pixels = 0;
};

/// mask -> 3x3 erosion -> back-projection of valid depth -> z-score filter (2.5).
/// Throws std::out_of_range for an id missing from the bundle.
InstanceExtraction extract_instance_cloud(const SceneBundle& bundle, int instance_id);

/// PCA over the point set. Each axis is signed so its dot product with x, then y,
/// then z (first non-negligible) is non-negative.
GeometryAttributes pca_geometry(std::span<const Vec3> points);
inline GeometryAttributes pca_geometry(const InstanceCloud& cloud) {
  return pca_geometry(std::span<const Vec3>(cloud.points));
}

/// Population covariance matrix, row-major.
std::array<double, 9> covariance(std::span<const Vec3> points);

}  // namespace gscg
