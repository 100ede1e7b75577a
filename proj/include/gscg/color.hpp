#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gscg/scene_io.hpp"

namespace gscg {

/// CIELAB under D65, 2 degree observer.
struct LabColor {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;
  friend bool operator==(const LabColor&, const LabColor&) = default;
};

struct ColorShare {
  std::string name;
  LabColor lab;
  double fraction = 0.0;
  friend bool operator==(const ColorShare&, const ColorShare&) = default;
};

struct WeightedLab {
  LabColor center;
  double mass = 0.0;
};

LabColor rgb_to_lab(Rgb8 rgb);
/// Inverse conversion, clamped to the sRGB gamut and rounded.
Rgb8 lab_to_rgb(const LabColor& lab);

/// CIE Delta E 2000 with kL = kC = kH = 1.
double ciede2000(const LabColor& c1, const LabColor& c2);

struct PaletteEntryRgb {
  const char* name;
  Rgb8 rgb;
};
const std::vector<PaletteEntryRgb>& css4_table();

enum class ColorMetric { kCiede2000, kEuclideanLab };

class Palette {
 public:
  struct Entry {
    std::string name;
    Rgb8 rgb;
    LabColor lab;
  };

  /// The 148 CSS4 named colors, alphabetical.
  static const Palette& css4();
  /// Reads "name #rrggbb" lines; '#' at line start begins a comment.
  static Palette load(const std::filesystem::path& path);

  explicit Palette(std::vector<Entry> entries);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const Entry* find(std::string_view name) const;

 private:
  std::vector<Entry> entries_;
};

/// Nearest palette entry; ties resolve to the earlier entry.
const std::string& name_color(const LabColor& lab, const Palette& palette = Palette::css4(),
                              ColorMetric metric = ColorMetric::kCiede2000);

inline constexpr int kDominantColorClusters = 20;
inline constexpr std::uint64_t kDominantColorSeed = 42;
inline constexpr double kColorMergeThreshold = 15.0;

/// k-means++ seeded Lloyd iterations in LAB. If there are fewer than k distinct
/// colors, one cluster per distinct color (in first-seen order). Masses are
/// pixel counts and sum to pixels.size().
std::vector<WeightedLab> kmeans_lab(std::span<const LabColor> pixels, int k, std::uint64_t seed);

/// Repeatedly merges the globally closest pair (by Delta E 2000) while its
/// distance is below threshold. The merged centre is the mass-weighted mean and
/// takes the lower index.
std::vector<WeightedLab> merge_clusters(std::vector<WeightedLab> clusters, double threshold);

/// Full chromatic pipeline: k=20 k-means (seed 42), merge below 15.0, CSS4 naming.
/// Shares with the same name are summed; output is sorted by fraction, descending.
/// Throws std::invalid_argument for an empty pixel list.
std::vector<ColorShare> dominant_colors(std::span<const Rgb8> pixels,
                                        ColorMetric naming = ColorMetric::kCiede2000);

}  // namespace gscg
