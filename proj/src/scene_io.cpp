#include "gscg/scene_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace gscg {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string pixel_str(int u, int v) {
  return "(u=" + std::to_string(u) + ", v=" + std::to_string(v) + ")";
}

template <typename T>
void check_shape(const Raster<T>& r, const char* file, int w, int h) {
  if (!r.same_shape(w, h))
    throw BundleError(std::string(file) + ": dimension mismatch, got " + std::to_string(r.width) +
                      "x" + std::to_string(r.height) + ", expected " + std::to_string(w) + "x" +
                      std::to_string(h) + " (from rgb.png)");
}

}  // namespace

CameraIntrinsics CameraIntrinsics::centered(double focal_px, int width, int height) {
  return {focal_px, width / 2.0, height / 2.0, width, height};
}

void CameraIntrinsics::validate() const {
  if (!(focal_length_px > 0.0) || !std::isfinite(focal_length_px))
    throw BundleError("meta.json: focal_length_px must be positive, got " +
                      std::to_string(focal_length_px));
  if (width <= 0 || height <= 0) throw BundleError("meta.json: image size must be positive");
  if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height))
    throw BundleError("meta.json: principal point (" + std::to_string(cx) + ", " +
                      std::to_string(cy) + ") outside the image");
}

bool SceneBundle::same_bits(const Raster<float>& a, const Raster<float>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(float)) == 0;
}

void SceneBundle::validate() const {
  const int w = rgb.width, h = rgb.height;
  if (w <= 0 || h <= 0) throw BundleError("rgb.png: empty image");
  check_shape(depth_m, "depth.pfm", w, h);
  check_shape(instance_map, "instances.png", w, h);
  check_shape(material_map, "materials.png", w, h);
  if (intrinsics.width != w || intrinsics.height != h)
    throw BundleError("meta.json: intrinsics size does not match rgb.png");
  intrinsics.validate();

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      int id = instance_map.at(u, v);
      if (material_map.at(u, v) >= material_vocab.size())
        throw BundleError("materials.png: unknown material index " +
                          std::to_string(material_map.at(u, v)) + " at " + pixel_str(u, v) +
                          " (vocabulary has " + std::to_string(material_vocab.size()) +
                          " entries)");
      if (id == 0) continue;
      if (!semantic_of_instance.contains(id))
        throw BundleError("instances.png: instance id " + std::to_string(id) + " at " +
                          pixel_str(u, v) + " has no entry in meta.json semantic_of_instance");
      float d = depth_m.at(u, v);
      if (!valid_depth(d))
        throw BundleError("depth.pfm: non-positive or non-finite depth " + std::to_string(d) +
                          " under instance " + std::to_string(id) + " at " + pixel_str(u, v));
    }
  }
}

std::vector<int> SceneBundle::instance_ids() const {
  std::set<int> ids;
  for (auto id : instance_map.data)
    if (id != 0) ids.insert(id);
  return {ids.begin(), ids.end()};
}

Vec3 back_project(double u, double v, double depth, const CameraIntrinsics& cam) {
  if (!valid_depth(depth))
    throw std::invalid_argument("back_project: depth must be finite and positive, got " +
                                std::to_string(depth));
  const double f = cam.focal_length_px;
  return {(u - cam.cx) * depth / f, (v - cam.cy) * depth / f, depth};
}

std::array<double, 2> project(const Vec3& p, const CameraIntrinsics& cam) {
  const double f = cam.focal_length_px;
  return {p[0] * f / p[2] + cam.cx, p[1] * f / p[2] + cam.cy};
}

DenseCloud build_dense_cloud(const SceneBundle& bundle) {
  DenseCloud out;
  const auto& depth = bundle.depth_m;
  out.entries.reserve(depth.size());
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      double d = depth.at(u, v);
      if (!valid_depth(d)) {
        ++out.skipped;
        continue;
      }
      out.entries.push_back({u, v, back_project(u, v, d, bundle.intrinsics)});
    }
  }
  return out;
}

// PFM: text header "Pf\n<w> <h>\n<scale>\n", negative scale = little endian,
// rows stored bottom-to-top.
Raster<float> read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError(path.string() + ": cannot open file");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || magic != "Pf")
    throw BundleError(path.string() + ": not a grayscale PFM (expected 'Pf' header)");
  if (w <= 0 || h <= 0 || scale == 0.0)
    throw BundleError(path.string() + ": invalid PFM header");
  in.get();  // single whitespace after the scale line
  const bool little = scale < 0.0;
  Raster<float> out(w, h);
  std::vector<std::uint32_t> row(w);
  for (int r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(w * 4));
    if (!in)
      throw BundleError(path.string() + ": truncated PFM data at row " + std::to_string(r));
    const int v = h - 1 - r;
    for (int u = 0; u < w; ++u) {
      std::uint32_t bits = row[u];
      if ((std::endian::native == std::endian::little) != little) bits = __builtin_bswap32(bits);
      out.at(u, v) = std::bit_cast<float>(bits);
    }
  }
  return out;
}

void write_pfm(const Raster<float>& raster, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BundleError(path.string() + ": cannot open for writing");
  out << "Pf\n" << raster.width << " " << raster.height << "\n-1.0\n";
  std::vector<std::uint32_t> row(raster.width);
  for (int r = 0; r < raster.height; ++r) {
    const int v = raster.height - 1 - r;
    for (int u = 0; u < raster.width; ++u) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(raster.at(u, v));
      if constexpr (std::endian::native != std::endian::little) bits = __builtin_bswap32(bits);
      row[u] = bits;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(raster.width * 4));
  }
  if (!out) throw BundleError(path.string() + ": write failed");
}

SceneBundle load_bundle(const fs::path& dir) {
  for (const char* name : {"rgb.png", "depth.pfm", "instances.png", "materials.png", "meta.json"})
    if (!fs::exists(dir / name)) throw BundleError((dir / name).string() + ": missing file");

  SceneBundle b;
  b.source_id = dir.filename().string();
  if (b.source_id.empty()) b.source_id = dir.parent_path().filename().string();
  b.rgb = read_png_rgb8(dir / "rgb.png");
  b.depth_m = read_pfm(dir / "depth.pfm");
  b.instance_map = read_png_gray16(dir / "instances.png");
  b.material_map = read_png_gray8(dir / "materials.png");

  json meta;
  try {
    std::ifstream in(dir / "meta.json");
    meta = json::parse(in);
    int version = meta.value("format_version", kBundleFormatVersion);
    if (version != kBundleFormatVersion)
      throw BundleError("meta.json: unsupported format_version " + std::to_string(version));
    const double f = meta.at("focal_length_px").get<double>();
    b.intrinsics = CameraIntrinsics::centered(f, b.rgb.width, b.rgb.height);
    if (meta.contains("principal_point")) {
      b.intrinsics.cx = meta["principal_point"].at(0).get<double>();
      b.intrinsics.cy = meta["principal_point"].at(1).get<double>();
    }
    for (auto& [key, label] : meta.at("semantic_of_instance").items()) {
      int id = 0;
      std::istringstream ks(key);
      if (!(ks >> id) || !ks.eof() || id <= 0 || id > 65535)
        throw BundleError("meta.json: semantic_of_instance key '" + key +
                          "' is not a valid instance id");
      b.semantic_of_instance[id] = label.get<std::string>();
    }
    b.material_vocab = meta.at("material_vocab").get<std::vector<std::string>>();
    if (b.material_vocab.size() > 256)
      throw BundleError("meta.json: material_vocab has more than 256 entries");
  } catch (const json::exception& e) {
    throw BundleError((dir / "meta.json").string() + ": " + e.what());
  }
  b.validate();
  return b;
}

void write_bundle(const SceneBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  write_png_rgb8(b.rgb, dir / "rgb.png");
  write_pfm(b.depth_m, dir / "depth.pfm");
  write_png_gray16(b.instance_map, dir / "instances.png");
  write_png_gray8(b.material_map, dir / "materials.png");
  json meta;
  meta["format_version"] = kBundleFormatVersion;
  meta["focal_length_px"] = b.intrinsics.focal_length_px;
  meta["principal_point"] = {b.intrinsics.cx, b.intrinsics.cy};
  json sem = json::object();
  for (const auto& [id, label] : b.semantic_of_instance) sem[std::to_string(id)] = label;
  meta["semantic_of_instance"] = sem;
  meta["material_vocab"] = b.material_vocab;
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";
  if (!out) throw BundleError((dir / "meta.json").string() + ": write failed");
}

}  // namespace gscg
