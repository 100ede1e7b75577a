#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "gscg/pointcloud.hpp"

using namespace gscg;

namespace {

Mask erode_oracle(const Mask& m, int k) {
  Mask out(m.width, m.height, 0);
  const int r = k / 2;
  for (int v = 0; v < m.height; ++v)
    for (int u = 0; u < m.width; ++u) {
      bool all = true;
      for (int dv = -r; dv <= r && all; ++dv)
        for (int du = -r; du <= r && all; ++du) {
          const int x = u + du, y = v + dv;
          if (x < 0 || y < 0 || x >= m.width || y >= m.height || !m.at(x, y)) all = false;
        }
      out.at(u, v) = all ? 1 : 0;
    }
  return out;
}

std::vector<std::size_t> zscore_oracle(const std::vector<Vec3>& pts, double thr) {
  const double n = static_cast<double>(pts.size());
  Vec3 mean{}, sd{};
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a) mean[a] += p[a] / n;
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a) sd[a] += (p[a] - mean[a]) * (p[a] - mean[a]) / n;
  for (auto& s : sd) s = std::sqrt(s);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool ok = true;
    for (int a = 0; a < 3; ++a)
      if (sd[a] > 0 && std::abs(pts[i][a] - mean[a]) / sd[a] > thr) ok = false;
    if (ok) keep.push_back(i);
  }
  return keep;
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

}  // namespace

TEST_CASE("erosion matches a brute-force oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 20), h = 1 + static_cast<int>(rng() % 20);
    Mask m(w, h, 0);
    const double density = 0.3 + 0.7 * (trial % 5) / 4.0;
    std::uniform_real_distribution<double> U(0, 1);
    for (auto& px : m.data) px = U(rng) < density ? 1 : 0;
    CHECK(erode_mask(m, 3) == erode_oracle(m, 3));
    CHECK(erode_mask(m, 5) == erode_oracle(m, 5));
  }
}

TEST_CASE("erosion examples") {
  Mask m(5, 5, 1);
  auto e = erode_mask(m, 3);
  int count = 0;
  for (auto px : e.data) count += px;
  CHECK(count == 9);  // border pixels touch the outside
  CHECK(e.at(2, 2) == 1);
  CHECK(e.at(0, 2) == 0);
}

TEST_CASE("z-score filter matches the oracle") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> N(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> pts(50 + rng() % 400);
    for (auto& p : pts) p = {N(rng), 3 * N(rng), 0.5 * N(rng) + 2};
    if (trial % 3 == 0)
      for (auto& p : pts) p[2] = 1.25;  // zero variance axis
    pts[0] = {40, 0, 2};
    auto keep = zscore_keep_indices(pts, kZScoreThreshold);
    CHECK(keep == zscore_oracle(pts, kZScoreThreshold));
    CHECK(std::find(keep.begin(), keep.end(), 0u) == keep.end());
    CHECK(zscore_filter(pts, kZScoreThreshold).size() == keep.size());
  }
}

TEST_CASE("PCA of a uniform box grid") {
  // Uniform grid of n points over [-L/2, L/2]: population variance (L^2/12)(n+1)/(n-1).
  const double Lx = 2.0, Ly = 0.8, Lz = 0.3;
  const int nx = 41, ny = 17, nz = 7;
  std::vector<Vec3> pts;
  auto coord = [](int i, int n, double L) { return -L / 2 + L * i / (n - 1); };
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k)
        pts.push_back({coord(i, nx, Lx) + 1, coord(j, ny, Ly) - 2, coord(k, nz, Lz) + 3});
  auto var = [](int n, double L) { return L * L / 12.0 * (n + 1) / (n - 1); };
  auto g = pca_geometry(pts);
  CHECK(g.size[0] == doctest::Approx(2 * std::sqrt(var(nx, Lx))).epsilon(1e-12));
  CHECK(g.size[1] == doctest::Approx(2 * std::sqrt(var(ny, Ly))).epsilon(1e-12));
  CHECK(g.size[2] == doctest::Approx(2 * std::sqrt(var(nz, Lz))).epsilon(1e-12));
  CHECK(g.centroid[0] == doctest::Approx(1).epsilon(1e-12));
  CHECK(g.centroid[1] == doctest::Approx(-2).epsilon(1e-12));
  CHECK(g.centroid[2] == doctest::Approx(3).epsilon(1e-12));
  CHECK(std::abs(g.axes[0][0]) == doctest::Approx(1).epsilon(1e-12));
  CHECK(std::abs(g.axes[1][1]) == doctest::Approx(1).epsilon(1e-12));
  CHECK(std::abs(g.axes[2][2]) == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("PCA axes are an orthonormal eigenbasis of the covariance") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> N(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec3> pts(200);
    const double s0 = 0.5 + trial * 0.1, s1 = 0.3, s2 = 0.05;
    for (auto& p : pts) {
      const double a = s0 * N(rng), b = s1 * N(rng), c = s2 * N(rng);
      p = {a + b, a - b + c, c + 0.1 * a};
    }
    auto g = pca_geometry(pts);
    auto C = covariance(pts);
    CHECK(g.size[0] >= g.size[1]);
    CHECK(g.size[1] >= g.size[2]);
    for (int i = 0; i < 3; ++i) {
      const auto& e = g.axes[i];
      CHECK(dot(e, e) == doctest::Approx(1).epsilon(1e-12));
      for (int j = i + 1; j < 3; ++j) CHECK(std::abs(dot(e, g.axes[j])) < 1e-10);
      const double lambda = g.size[i] * g.size[i] / 4;
      for (int r = 0; r < 3; ++r) {
        const double Ce = C[3 * r] * e[0] + C[3 * r + 1] * e[1] + C[3 * r + 2] * e[2];
        CHECK(std::abs(Ce - lambda * e[r]) < 1e-10);
      }
      // Canonical sign: first non-negligible component is positive.
      for (int a = 0; a < 3; ++a)
        if (std::abs(e[a]) > 1e-9) {
          CHECK(e[a] > 0);
          break;
        }
    }
    auto m = g.orientation_row_major();
    auto back = GeometryAttributes::axes_from_row_major(std::span<const double, 9>(m));
    CHECK(back == g.axes);
    CHECK(m[1] == g.axes[1][0]);  // axes are columns
  }
}

TEST_CASE("instance extraction drops small instances and erodes boundaries") {
  auto b = gscg::testing::flat_bundle(40, 30);
  gscg::testing::paint_instance(b, 1, "box", 5, 5, 25, 20);  // 20x15 -> 18x13 after erosion
  gscg::testing::paint_instance(b, 2, "pen", 30, 5, 40, 15);  // 10x10 at border -> 8x8 = 64 < 100
  auto ex = extract_instance_cloud(b, 1);
  CHECK(ex.eroded_pixels == 18 * 13);
  REQUIRE(ex.cloud.has_value());
  CHECK(ex.cloud->size() == 18 * 13);
  CHECK(ex.cloud->source_pixels.size() == ex.cloud->size());
  auto small = extract_instance_cloud(b, 2);
  CHECK_FALSE(small.cloud.has_value());
  CHECK_THROWS_AS(extract_instance_cloud(b, 9), std::out_of_range);

  b.depth_m.at(10, 10) = std::nanf("");
  b.depth_m.at(12, 10) = 50.0f;  // isolated far outlier gets filtered
  ex = extract_instance_cloud(b, 1);
  REQUIRE(ex.cloud.has_value());
  CHECK(ex.cloud->size() == 18 * 13 - 2);
}
