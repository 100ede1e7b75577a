#include "gscg/color.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gscg {

namespace {

constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
constexpr double kDelta = 6.0 / 29.0;

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

double sq_dist(const LabColor& x, const LabColor& y) {
  const double dl = x.L - y.L, da = x.a - y.a, db = x.b - y.b;
  return dl * dl + da * da + db * db;
}

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

LabColor rgb_to_lab(Rgb8 rgb) {
  const double r = srgb_to_linear(rgb.r / 255.0);
  const double g = srgb_to_linear(rgb.g / 255.0);
  const double b = srgb_to_linear(rgb.b / 255.0);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Rgb8 lab_to_rgb(const LabColor& lab) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const double x = kXn * lab_f_inv(fx), y = kYn * lab_f_inv(fy), z = kZn * lab_f_inv(fz);
  const double lin[3] = {3.2404542 * x - 1.5371385 * y - 0.4985314 * z,
                         -0.9692660 * x + 1.8760108 * y + 0.0415560 * z,
                         0.0556434 * x - 0.2040259 * y + 1.0572252 * z};
  std::uint8_t out[3];
  for (int i = 0; i < 3; ++i) {
    double c = linear_to_srgb(std::clamp(lin[i], 0.0, 1.0));
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  }
  return {out[0], out[1], out[2]};
}

double ciede2000(const LabColor& c1, const LabColor& c2) {
  using std::atan2, std::cos, std::sin, std::sqrt, std::exp, std::pow, std::abs;
  constexpr double kPi = std::numbers::pi;
  constexpr double kDeg = kPi / 180.0;
  constexpr double k25_7 = 6103515625.0;  // 25^7

  const double C1 = sqrt(c1.a * c1.a + c1.b * c1.b);
  const double C2 = sqrt(c2.a * c2.a + c2.b * c2.b);
  const double Cbar = 0.5 * (C1 + C2);
  const double Cbar7 = pow(Cbar, 7.0);
  const double G = 0.5 * (1.0 - sqrt(Cbar7 / (Cbar7 + k25_7)));
  const double a1p = (1.0 + G) * c1.a, a2p = (1.0 + G) * c2.a;
  const double C1p = sqrt(a1p * a1p + c1.b * c1.b);
  const double C2p = sqrt(a2p * a2p + c2.b * c2.b);

  auto hue = [&](double b, double ap) {
    if (b == 0.0 && ap == 0.0) return 0.0;
    double h = atan2(b, ap);
    if (h < 0.0) h += 2.0 * kPi;
    return h;
  };
  const double h1p = hue(c1.b, a1p), h2p = hue(c2.b, a2p);

  const double dLp = c2.L - c1.L;
  const double dCp = C2p - C1p;
  double dhp = 0.0;
  if (C1p * C2p != 0.0) {
    dhp = h2p - h1p;
    if (dhp > kPi)
      dhp -= 2.0 * kPi;
    else if (dhp < -kPi)
      dhp += 2.0 * kPi;
  }
  const double dHp = 2.0 * sqrt(C1p * C2p) * sin(dhp / 2.0);

  const double Lbarp = 0.5 * (c1.L + c2.L);
  const double Cbarp = 0.5 * (C1p + C2p);
  double hbarp = h1p + h2p;
  if (C1p * C2p != 0.0) {
    if (abs(h1p - h2p) <= kPi)
      hbarp = 0.5 * (h1p + h2p);
    else if (h1p + h2p < 2.0 * kPi)
      hbarp = 0.5 * (h1p + h2p + 2.0 * kPi);
    else
      hbarp = 0.5 * (h1p + h2p - 2.0 * kPi);
  }

  const double T = 1.0 - 0.17 * cos(hbarp - 30.0 * kDeg) + 0.24 * cos(2.0 * hbarp) +
                   0.32 * cos(3.0 * hbarp + 6.0 * kDeg) - 0.20 * cos(4.0 * hbarp - 63.0 * kDeg);
  const double dtheta = 30.0 * kDeg * exp(-pow((hbarp / kDeg - 275.0) / 25.0, 2.0));
  const double Cbarp7 = pow(Cbarp, 7.0);
  const double RC = 2.0 * sqrt(Cbarp7 / (Cbarp7 + k25_7));
  const double L50 = (Lbarp - 50.0) * (Lbarp - 50.0);
  const double SL = 1.0 + 0.015 * L50 / sqrt(20.0 + L50);
  const double SC = 1.0 + 0.045 * Cbarp;
  const double SH = 1.0 + 0.015 * Cbarp * T;
  const double RT = -sin(2.0 * dtheta) * RC;

  const double tL = dLp / SL, tC = dCp / SC, tH = dHp / SH;
  return sqrt(tL * tL + tC * tC + tH * tH + RT * tC * tH);
}

Palette::Palette(std::vector<Entry> entries) : entries_(std::move(entries)) {}

const Palette& Palette::css4() {
  static const Palette palette = [] {
    std::vector<Entry> entries;
    for (const auto& e : css4_table()) entries.push_back({e.name, e.rgb, rgb_to_lab(e.rgb)});
    return Palette(std::move(entries));
  }();
  return palette;
}

Palette Palette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open palette file");
  std::vector<Entry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, hex;
    if (!(ls >> name >> hex) || hex.size() != 7 || hex[0] != '#')
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected '<name> #rrggbb'");
    auto byte = [&](int off) {
      return static_cast<std::uint8_t>(std::stoi(hex.substr(off, 2), nullptr, 16));
    };
    Rgb8 rgb{byte(1), byte(3), byte(5)};
    entries.push_back({name, rgb, rgb_to_lab(rgb)});
  }
  return Palette(std::move(entries));
}

const Palette::Entry* Palette::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const std::string& name_color(const LabColor& lab, const Palette& palette, ColorMetric metric) {
  if (palette.size() == 0) throw std::invalid_argument("name_color: empty palette");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < palette.size(); ++i) {
    const auto& e = palette.entries()[i];
    double d = metric == ColorMetric::kCiede2000 ? ciede2000(lab, e.lab) : sq_dist(lab, e.lab);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return palette.entries()[best].name;
}

std::vector<WeightedLab> kmeans_lab(std::span<const LabColor> pixels, int k, std::uint64_t seed) {
  if (pixels.empty()) throw std::invalid_argument("kmeans_lab: no pixels");
  if (k < 1) throw std::invalid_argument("kmeans_lab: k must be positive");

  // Lloyd on the multiset is Lloyd on distinct colours weighted by multiplicity.
  struct Key {
    double L, a, b;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, std::size_t> index;
  std::vector<LabColor> pts;
  std::vector<double> w;
  for (const auto& p : pixels) {
    auto [it, fresh] = index.try_emplace(Key{p.L, p.a, p.b}, pts.size());
    if (fresh) {
      pts.push_back(p);
      w.push_back(0.0);
    }
    w[it->second] += 1.0;
  }
  const std::size_t n = pts.size();
  if (n <= static_cast<std::size_t>(k)) {
    std::vector<WeightedLab> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({pts[i], w[i]});
    return out;
  }

  std::mt19937_64 rng(seed);
  // k-means++ seeding.
  std::vector<LabColor> centers;
  centers.reserve(k);
  auto pick_weighted = [&](const std::vector<double>& weights) {
    double sum = 0.0;
    for (double x : weights) sum += x;
    double r = unit(rng) * sum;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      r -= weights[i];
      if (r < 0.0) return i;
    }
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    return std::size_t{0};
  };
  centers.push_back(pts[pick_weighted(w)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<double> prob(n);
  while (centers.size() < static_cast<std::size_t>(k)) {
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(pts[i], centers.back()));
      prob[i] = w[i] * d2[i];
    }
    centers.push_back(pts[pick_weighted(prob)]);
  }

  std::vector<int> assign(n, -1);
  std::vector<double> mass(k);
  constexpr int kMaxIter = 100;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(pts[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        double d = sq_dist(pts[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::vector<LabColor> sums(k);
    std::fill(mass.begin(), mass.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[assign[i]];
      s.L += w[i] * pts[i].L;
      s.a += w[i] * pts[i].a;
      s.b += w[i] * pts[i].b;
      mass[assign[i]] += w[i];
    }
    for (int c = 0; c < k; ++c) {
      if (mass[c] > 0.0) {
        centers[c] = {sums[c].L / mass[c], sums[c].a / mass[c], sums[c].b / mass[c]};
        continue;
      }
      // Re-seed an empty cluster at the point farthest from its current centre.
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] < 0) continue;
        double d = sq_dist(pts[i], centers[assign[i]]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      centers[c] = pts[far];
      assign[far] = -1;
    }
  }

  // Final masses from the last assignment.
  std::vector<LabColor> sums(k);
  std::fill(mass.begin(), mass.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    int c = assign[i];
    if (c < 0) {
      c = 0;
      double bd = sq_dist(pts[i], centers[0]);
      for (int j = 1; j < k; ++j)
        if (double d = sq_dist(pts[i], centers[j]); d < bd) {
          bd = d;
          c = j;
        }
    }
    sums[c].L += w[i] * pts[i].L;
    sums[c].a += w[i] * pts[i].a;
    sums[c].b += w[i] * pts[i].b;
    mass[c] += w[i];
  }
  std::vector<WeightedLab> out;
  for (int c = 0; c < k; ++c) {
    if (mass[c] <= 0.0) continue;
    out.push_back({{sums[c].L / mass[c], sums[c].a / mass[c], sums[c].b / mass[c]}, mass[c]});
  }
  return out;
}

std::vector<WeightedLab> merge_clusters(std::vector<WeightedLab> clusters, double threshold) {
  while (clusters.size() > 1) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double d = ciede2000(clusters[i].center, clusters[j].center);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    if (!(best < threshold)) break;
    auto& a = clusters[bi];
    const auto& b = clusters[bj];
    const double m = a.mass + b.mass;
    a.center = {(a.center.L * a.mass + b.center.L * b.mass) / m,
                (a.center.a * a.mass + b.center.a * b.mass) / m,
                (a.center.b * a.mass + b.center.b * b.mass) / m};
    a.mass = m;
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  return clusters;
}

std::vector<ColorShare> dominant_colors(std::span<const Rgb8> pixels, ColorMetric naming) {
  if (pixels.empty()) throw std::invalid_argument("dominant_colors: empty pixel list");
  std::vector<LabColor> lab;
  lab.reserve(pixels.size());
  // 8-bit RGB has few distinct values per region; cache conversions.
  std::map<std::uint32_t, LabColor> cache;
  for (const auto& p : pixels) {
    std::uint32_t key = (std::uint32_t{p.r} << 16) | (std::uint32_t{p.g} << 8) | p.b;
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, rgb_to_lab(p)).first;
    lab.push_back(it->second);
  }
  auto clusters = kmeans_lab(lab, kDominantColorClusters, kDominantColorSeed);
  clusters = merge_clusters(std::move(clusters), kColorMergeThreshold);

  const double total = static_cast<double>(pixels.size());
  std::vector<ColorShare> shares;
  for (const auto& c : clusters) {
    const std::string& name = name_color(c.center, Palette::css4(), naming);
    auto it = std::find_if(shares.begin(), shares.end(),
                           [&](const ColorShare& s) { return s.name == name; });
    if (it == shares.end()) {
      shares.push_back({name, c.center, c.mass / total});
      continue;
    }
    // Combine with a fraction-weighted mean centre.
    const double f = c.mass / total, g = it->fraction;
    it->lab = {(it->lab.L * g + c.center.L * f) / (g + f), (it->lab.a * g + c.center.a * f) / (g + f),
               (it->lab.b * g + c.center.b * f) / (g + f)};
    it->fraction = g + f;
  }
  std::stable_sort(shares.begin(), shares.end(), [](const ColorShare& x, const ColorShare& y) {
    if (x.fraction != y.fraction) return x.fraction > y.fraction;
    return x.name < y.name;
  });
  return shares;
}

}  // namespace gscg
