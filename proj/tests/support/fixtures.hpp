#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "gscg/scene_io.hpp"

namespace gscg::testing {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gscg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// w x h bundle at constant depth with no instances and one material.
inline SceneBundle flat_bundle(int w, int h, float depth = 2.0f, double focal = 500.0) {
  SceneBundle b;
  b.rgb = Raster<Rgb8>(w, h, Rgb8{128, 128, 128});
  b.depth_m = Raster<float>(w, h, depth);
  b.instance_map = Raster<std::uint16_t>(w, h, 0);
  b.material_map = Raster<std::uint8_t>(w, h, 0);
  b.material_vocab = {"wood"};
  b.intrinsics = CameraIntrinsics::centered(focal, w, h);
  b.source_id = "flat";
  return b;
}

/// Paints a solid rectangle [u0,u1) x [v0,v1) with an instance id.
inline void paint_instance(SceneBundle& b, int id, const std::string& label, int u0, int v0,
                           int u1, int v1) {
  for (int v = v0; v < v1; ++v)
    for (int u = u0; u < u1; ++u) b.instance_map.at(u, v) = static_cast<std::uint16_t>(id);
  b.semantic_of_instance[id] = label;
}

}  // namespace gscg::testing
