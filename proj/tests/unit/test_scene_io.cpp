#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "gscg/scene_io.hpp"

using namespace gscg;
using gscg::testing::TempDir;

TEST_CASE("back_project examples") {
  auto cam = CameraIntrinsics::centered(500.0, 640, 480);
  auto p = back_project(cam.cx, cam.cy, 2.0, cam);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 0.0);
  CHECK(p[2] == 2.0);

  p = back_project(cam.cx + 500, cam.cy, 2.0, cam);
  CHECK(p[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(p[1] == 0.0);

  // (u - cx) = 100, (v - cy) = -50, z = 3, f = 600: x = 0.5, y = -0.25.
  cam.focal_length_px = 600.0;
  p = back_project(cam.cx + 100, cam.cy - 50, 3.0, cam);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(p[2] == 3.0);

  CHECK_THROWS_AS(back_project(1, 1, 0.0, cam), std::invalid_argument);
  CHECK_THROWS_AS(back_project(1, 1, -1.0, cam), std::invalid_argument);
  CHECK_THROWS_AS(back_project(1, 1, std::nan(""), cam), std::invalid_argument);
}

TEST_CASE("projection inverts back-projection") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> f(100, 2000), uu(0, 1920), vv(0, 1080), dd(0.05, 50);
  for (int i = 0; i < 2000; ++i) {
    CameraIntrinsics cam{f(rng), uu(rng), vv(rng), 1920, 1080};
    const int u = static_cast<int>(uu(rng)), v = static_cast<int>(vv(rng));
    const double d = dd(rng);
    auto p = back_project(u, v, d, cam);
    CHECK(p[2] == d);
    auto uv = project(p, cam);
    CHECK(std::abs(uv[0] - u) <= 1e-9 * std::max(1.0, std::abs(double(u))));
    CHECK(std::abs(uv[1] - v) <= 1e-9 * std::max(1.0, std::abs(double(v))));
  }
}

TEST_CASE("dense cloud counts and skip rule") {
  auto b = gscg::testing::flat_bundle(2, 2);
  auto cloud = build_dense_cloud(b);
  CHECK(cloud.entries.size() == 4);
  CHECK(cloud.skipped == 0);

  b.depth_m.at(1, 0) = std::numeric_limits<float>::quiet_NaN();
  cloud = build_dense_cloud(b);
  CHECK(cloud.entries.size() == 3);
  CHECK(cloud.skipped == 1);
}

TEST_CASE("dense cloud on a constant-depth plane") {
  auto b = gscg::testing::flat_bundle(16, 8, 2.5f, 400.0);
  b.depth_m.at(3, 3) = 0.0f;
  b.depth_m.at(4, 4) = -1.0f;
  b.depth_m.at(5, 5) = std::numeric_limits<float>::infinity();
  auto cloud = build_dense_cloud(b);
  CHECK(cloud.entries.size() + cloud.skipped == b.depth_m.size());
  CHECK(cloud.skipped == 3);
  for (const auto& e : cloud.entries) CHECK(e.point[2] == 2.5);
  // Neighbouring columns in a row differ by z / f.
  for (std::size_t i = 1; i < cloud.entries.size(); ++i) {
    const auto& a = cloud.entries[i - 1];
    const auto& c = cloud.entries[i];
    if (a.v == c.v && c.u == a.u + 1)
      CHECK(c.point[0] - a.point[0] == doctest::Approx(2.5 / 400.0).epsilon(1e-12));
  }
}

TEST_CASE("bundle write/load round trip is bit exact") {
  TempDir dir("bundle_rt");
  std::mt19937_64 rng(3);
  SceneBundle b = gscg::testing::flat_bundle(37, 23);
  for (auto& px : b.rgb.data)
    px = {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
          static_cast<std::uint8_t>(rng())};
  std::uniform_real_distribution<float> depth(0.1f, 20.0f);
  for (auto& d : b.depth_m.data) d = depth(rng);
  b.depth_m.at(0, 0) = std::numeric_limits<float>::quiet_NaN();  // hole outside any instance
  b.material_vocab = {"wood", "metal", "fabric"};
  for (auto& m : b.material_map.data) m = static_cast<std::uint8_t>(rng() % 3);
  gscg::testing::paint_instance(b, 1, "chair", 2, 2, 10, 10);
  gscg::testing::paint_instance(b, 40000, "table", 12, 5, 30, 20);
  b.intrinsics.cx = 17.25;
  b.intrinsics.cy = 11.5;
  b.intrinsics.focal_length_px = 321.125;

  write_bundle(b, dir.path() / "scene");
  SceneBundle back = load_bundle(dir.path() / "scene");
  CHECK(back == b);
  CHECK(back.width() == 37);
  CHECK(back.height() == 23);
  CHECK(back.source_id == "scene");
}

TEST_CASE("principal point defaults to the image centre") {
  TempDir dir("bundle_pp");
  auto b = gscg::testing::flat_bundle(20, 10);
  write_bundle(b, dir.path());
  {
    std::ofstream meta(dir.path() / "meta.json");
    meta << R"({"format_version":1,"focal_length_px":250.0,"semantic_of_instance":{},"material_vocab":["wood"]})";
  }
  auto back = load_bundle(dir.path());
  CHECK(back.intrinsics.cx == 10.0);
  CHECK(back.intrinsics.cy == 5.0);
  CHECK(back.intrinsics.focal_length_px == 250.0);
}

TEST_CASE("bundle validation errors name the file and location") {
  TempDir dir("bundle_err");
  auto good = gscg::testing::flat_bundle(12, 9);
  gscg::testing::paint_instance(good, 3, "cup", 2, 2, 6, 6);

  SUBCASE("depth raster with a different width") {
    auto b = good;
    b.depth_m = Raster<float>(11, 9, 2.0f);
    write_bundle(b, dir.path());
    try {
      load_bundle(dir.path());
      FAIL("expected an error");
    } catch (const BundleError& e) {
      CHECK(std::string(e.what()).find("depth.pfm") != std::string::npos);
      CHECK(std::string(e.what()).find("dimension mismatch") != std::string::npos);
    }
  }
  SUBCASE("instance id missing from the sidecar") {
    auto b = good;
    b.instance_map.at(8, 7) = 7;
    write_bundle(b, dir.path());
    try {
      load_bundle(dir.path());
      FAIL("expected an error");
    } catch (const BundleError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("instance id 7") != std::string::npos);
      CHECK(msg.find("u=8, v=7") != std::string::npos);
    }
  }
  SUBCASE("unknown material index") {
    auto b = good;
    b.material_map.at(1, 4) = 5;
    write_bundle(b, dir.path());
    try {
      load_bundle(dir.path());
      FAIL("expected an error");
    } catch (const BundleError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("materials.png") != std::string::npos);
      CHECK(msg.find("u=1, v=4") != std::string::npos);
    }
  }
  SUBCASE("non-positive depth under an instance") {
    auto b = good;
    b.depth_m.at(3, 3) = 0.0f;
    write_bundle(b, dir.path());
    try {
      load_bundle(dir.path());
      FAIL("expected an error");
    } catch (const BundleError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("depth.pfm") != std::string::npos);
      CHECK(msg.find("u=3, v=3") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    write_bundle(good, dir.path());
    std::filesystem::remove(dir.path() / "materials.png");
    try {
      load_bundle(dir.path());
      FAIL("expected an error");
    } catch (const BundleError& e) {
      CHECK(std::string(e.what()).find("materials.png: missing file") != std::string::npos);
    }
  }
  SUBCASE("non-positive focal length") {
    auto b = good;
    b.intrinsics.focal_length_px = 0.0;
    write_bundle(b, dir.path());
    CHECK_THROWS_AS(load_bundle(dir.path()), BundleError);
  }
}

TEST_CASE("PFM reader accepts big-endian files") {
  TempDir dir("pfm_be");
  const auto path = dir.path() / "be.pfm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "Pf\n2 1\n1.0\n";
    for (float f : {1.5f, -2.0f}) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  auto r = read_pfm(path);
  CHECK(r.at(0, 0) == 1.5f);
  CHECK(r.at(1, 0) == -2.0f);
}
