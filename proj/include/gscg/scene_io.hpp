#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gscg {

/// Raised for any malformed or inconsistent scene bundle. The message names
/// the offending file and, where relevant, the pixel location.
class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

/// Row-major H x W raster.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const T& at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(int w, int h) const { return width == w && height == h; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

struct CameraIntrinsics {
  double focal_length_px = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Principal point at the image centre.
  static CameraIntrinsics centered(double focal_px, int width, int height);
  /// Throws BundleError unless f > 0 and the principal point lies in the image.
  void validate() const;

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

using Vec3 = std::array<double, 3>;

struct PixelPoint {
  int u = 0;
  int v = 0;
  Vec3 point{};
};

struct DenseCloud {
  std::vector<PixelPoint> entries;
  std::size_t skipped = 0;
};

struct SceneBundle {
  Raster<Rgb8> rgb;
  Raster<float> depth_m;
  Raster<std::uint16_t> instance_map;
  std::map<int, std::string> semantic_of_instance;
  Raster<std::uint8_t> material_map;
  std::vector<std::string> material_vocab;
  CameraIntrinsics intrinsics;
  /// Informational; usually the directory name the bundle was read from.
  std::string source_id;

  int width() const { return rgb.width; }
  int height() const { return rgb.height; }

  /// Checks every cross-raster invariant; throws BundleError on the first violation.
  void validate() const;

  /// Sorted, unique nonzero instance ids present in instance_map.
  std::vector<int> instance_ids() const;

  friend bool operator==(const SceneBundle& a, const SceneBundle& b) {
    return a.rgb == b.rgb && a.depth_m.width == b.depth_m.width &&
           a.depth_m.height == b.depth_m.height && a.instance_map == b.instance_map &&
           a.semantic_of_instance == b.semantic_of_instance &&
           a.material_map == b.material_map && a.material_vocab == b.material_vocab &&
           a.intrinsics == b.intrinsics && same_bits(a.depth_m, b.depth_m);
  }

 private:
  static bool same_bits(const Raster<float>& a, const Raster<float>& b);
};

inline constexpr int kBundleFormatVersion = 1;

/// Reads `rgb.png`, `depth.pfm`, `instances.png`, `materials.png` and `meta.json`
/// from `dir` and validates the result.
SceneBundle load_bundle(const std::filesystem::path& dir);

/// Inverse of load_bundle. Creates `dir` if needed. Writes the principal
/// point explicitly so the round trip is exact.
void write_bundle(const SceneBundle& bundle, const std::filesystem::path& dir);

/// Pinhole back-projection, +x right, +y down, +z forward:
/// x = (u - cx) z / f, y = (v - cy) z / f, z = depth.
Vec3 back_project(double u, double v, double depth, const CameraIntrinsics& cam);

/// Inverse of back_project: image coordinates of a camera-frame point.
std::array<double, 2> project(const Vec3& p, const CameraIntrinsics& cam);

/// Depth values that take part in back-projection: finite and strictly positive.
inline bool valid_depth(double d) { return std::isfinite(d) && d > 0.0; }

/// One entry per pixel with a valid depth, row-major order.
DenseCloud build_dense_cloud(const SceneBundle& bundle);

// Raster file codecs used by the bundle format.
Raster<float> read_pfm(const std::filesystem::path& path);
void write_pfm(const Raster<float>& raster, const std::filesystem::path& path);
Raster<Rgb8> read_png_rgb8(const std::filesystem::path& path);
Raster<std::uint8_t> read_png_gray8(const std::filesystem::path& path);
Raster<std::uint16_t> read_png_gray16(const std::filesystem::path& path);
void write_png_rgb8(const Raster<Rgb8>& raster, const std::filesystem::path& path);
void write_png_gray8(const Raster<std::uint8_t>& raster, const std::filesystem::path& path);
void write_png_gray16(const Raster<std::uint16_t>& raster, const std::filesystem::path& path);

}  // namespace gscg
