#include "gscg/pointcloud.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace gscg {

std::array<double, 9> GeometryAttributes::orientation_row_major() const {
  std::array<double, 9> m{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[3 * r + c] = axes[c][r];
  return m;
}

std::array<Vec3, 3> GeometryAttributes::axes_from_row_major(std::span<const double, 9> m) {
  std::array<Vec3, 3> axes{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) axes[c][r] = m[3 * r + c];
  return axes;
}

Mask erode_mask(const Mask& mask, int kernel) {
  if (kernel < 1 || kernel % 2 == 0)
    throw std::invalid_argument("erode_mask: kernel must be odd and >= 1, got " +
                                std::to_string(kernel));
  const int r = kernel / 2;
  const int w = mask.width, h = mask.height;
  // Separable: a k x k all-ones window is a horizontal run AND a vertical run.
  Mask horiz(w, h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (u - r < 0 || u + r >= w) continue;
      bool all = true;
      for (int du = -r; du <= r && all; ++du) all = mask.at(u + du, v) != 0;
      horiz.at(u, v) = all ? 1 : 0;
    }
  }
  Mask out(w, h, 0);
  for (int v = r; v < h - r; ++v) {
    for (int u = 0; u < w; ++u) {
      bool all = true;
      for (int dv = -r; dv <= r && all; ++dv) all = horiz.at(u, v + dv) != 0;
      out.at(u, v) = all ? 1 : 0;
    }
  }
  return out;
}

std::vector<std::size_t> zscore_keep_indices(std::span<const Vec3> points, double threshold) {
  const std::size_t n = points.size();
  std::vector<std::size_t> keep;
  if (n == 0) return keep;
  Vec3 mean{}, sd{};
  for (const auto& p : points)
    for (int a = 0; a < 3; ++a) mean[a] += p[a];
  for (int a = 0; a < 3; ++a) mean[a] /= static_cast<double>(n);
  for (const auto& p : points)
    for (int a = 0; a < 3; ++a) sd[a] += (p[a] - mean[a]) * (p[a] - mean[a]);
  for (int a = 0; a < 3; ++a) sd[a] = std::sqrt(sd[a] / static_cast<double>(n));

  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = true;
    for (int a = 0; a < 3 && ok; ++a) {
      if (sd[a] == 0.0) continue;
      ok = std::abs(points[i][a] - mean[a]) / sd[a] <= threshold;
    }
    if (ok) keep.push_back(i);
  }
  return keep;
}

std::vector<Vec3> zscore_filter(std::span<const Vec3> points, double threshold) {
  std::vector<Vec3> out;
  for (auto i : zscore_keep_indices(points, threshold)) out.push_back(points[i]);
  return out;
}

InstanceExtraction extract_instance_cloud(const SceneBundle& bundle, int instance_id) {
  if (!bundle.semantic_of_instance.contains(instance_id))
    throw std::out_of_range("extract_instance_cloud: unknown instance id " +
                            std::to_string(instance_id));
  const int w = bundle.width(), h = bundle.height();
  Mask mask(w, h, 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.data[i] = bundle.instance_map.data[i] == instance_id ? 1 : 0;

  InstanceExtraction out;
  out.eroded_mask = erode_mask(mask, kErosionKernel);

  std::vector<Vec3> pts;
  std::vector<std::array<int, 2>> pix;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!out.eroded_mask.at(u, v)) continue;
      ++out.eroded_pixels;
      double d = bundle.depth_m.at(u, v);
      if (!valid_depth(d)) continue;
      pts.push_back(back_project(u, v, d, bundle.intrinsics));
      pix.push_back({u, v});
    }
  }

  auto keep = zscore_keep_indices(pts, kZScoreThreshold);
  if (keep.size() < kMinInstancePoints) return out;
  InstanceCloud cloud;
  cloud.instance_id = instance_id;
  cloud.points.reserve(keep.size());
  cloud.source_pixels.reserve(keep.size());
  for (auto i : keep) {
    cloud.points.push_back(pts[i]);
    cloud.source_pixels.push_back(pix[i]);
  }
  out.cloud = std::move(cloud);
  return out;
}

std::array<double, 9> covariance(std::span<const Vec3> points) {
  std::array<double, 9> cov{};
  const std::size_t n = points.size();
  if (n == 0) return cov;
  Vec3 mean{};
  for (const auto& p : points)
    for (int a = 0; a < 3; ++a) mean[a] += p[a];
  for (int a = 0; a < 3; ++a) mean[a] /= static_cast<double>(n);
  for (const auto& p : points) {
    const double d[3] = {p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]};
    for (int r = 0; r < 3; ++r)
      for (int c = r; c < 3; ++c) cov[3 * r + c] += d[r] * d[c];
  }
  for (int r = 0; r < 3; ++r)
    for (int c = r; c < 3; ++c) {
      cov[3 * r + c] /= static_cast<double>(n);
      cov[3 * c + r] = cov[3 * r + c];
    }
  return cov;
}

namespace {

void canonical_sign(Vec3& axis) {
  constexpr double kEps = 1e-12;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(axis[a]) > kEps) {
      if (axis[a] < 0)
        for (auto& x : axis) x = -x;
      return;
    }
  }
}

}  // namespace

GeometryAttributes pca_geometry(std::span<const Vec3> points) {
  GeometryAttributes g;
  if (points.empty()) {
    g.axes = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    return g;
  }
  for (const auto& p : points)
    for (int a = 0; a < 3; ++a) g.centroid[a] += p[a];
  for (int a = 0; a < 3; ++a) g.centroid[a] /= static_cast<double>(points.size());

  auto cov = covariance(points);
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = cov[3 * r + c];
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  // Eigen sorts ascending.
  for (int i = 0; i < 3; ++i) {
    const int src = 2 - i;
    const double lambda = std::max(0.0, es.eigenvalues()(src));
    g.size[i] = 2.0 * std::sqrt(lambda);
    for (int a = 0; a < 3; ++a) g.axes[i][a] = es.eigenvectors()(a, src);
    canonical_sign(g.axes[i]);
  }
  return g;
}

}  // namespace gscg
